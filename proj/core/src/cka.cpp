/********************************************************************************
 * Copyright 2026 The GPD Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 ********************************************************************************/


#include "gpd/cka.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gpd/errors.hpp"

namespace gpd {

namespace {

Matrix center_columns(const Matrix& m)
{
    Matrix out = m;
    const double n = static_cast<double>(m.rows());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            mean += m(r, c);
        }
        mean /= n;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            out(r, c) -= mean;
        }
    }
    return out;
}

}  // namespace

FeatureSet::FeatureSet(Matrix m) : matrix(std::move(m))
{
    if (matrix.rows() < 2) {
        throw DimensionError("feature set needs at least 2 samples");
    }
    if (!matrix.all_finite()) {
        throw NumericError("feature set contains non-finite values");
    }
}

double linear_cka(const FeatureSet& student, const FeatureSet& teacher)
{
    if (student.samples() != teacher.samples()) {
        throw DimensionError("linear_cka: sample counts differ (" + std::to_string(student.samples()) + " vs " +
                             std::to_string(teacher.samples()) + ")");
    }
    const Matrix x = center_columns(student.matrix);
    const Matrix y = center_columns(teacher.matrix);

    const double x_norm = frobenius_sq(x);
    const double y_norm = frobenius_sq(y);
    // Scale-relative guard: centering a constant column leaves rounding residue.
    const auto degenerate = [](const Matrix& raw, double norm) {
        return norm <= 1e-24 * std::max(1.0, frobenius_sq(raw));
    };
    if (degenerate(student.matrix, x_norm) || degenerate(teacher.matrix, y_norm)) {
        throw DegenerateSimilarity("linear_cka: feature set has zero centered norm");
    }

    const double cross = frobenius_sq(matmul_tn(x, y));
    const double self_x = std::sqrt(frobenius_sq(matmul_tn(x, x)));
    const double self_y = std::sqrt(frobenius_sq(matmul_tn(y, y)));
    return std::clamp(cross / (self_x * self_y), 0.0, 1.0);
}

GapTracker::GapTracker(double momentum) : momentum_(momentum)
{
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("EMA momentum must lie in [0, 1)");
    }
}

double GapTracker::update(double cka) { return update_raw(1.0 - std::clamp(cka, 0.0, 1.0)); }

double GapTracker::update_raw(double raw_gap)
{
    raw_ = raw_gap;
    if (!initialized_) {
        smoothed_ = raw_gap;
        initialized_ = true;
    } else {
        smoothed_ = momentum_ * smoothed_ + (1.0 - momentum_) * raw_gap;
    }
    return smoothed_;
}

}  // namespace gpd
