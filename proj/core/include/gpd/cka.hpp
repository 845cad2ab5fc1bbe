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


#pragma once

#include <optional>

#include "gpd/numerics.hpp"

namespace gpd {

/// One row per question segment. Sets compared by CKA must share the row count.
struct FeatureSet {
    Matrix matrix;

    explicit FeatureSet(Matrix m);
    std::size_t samples() const noexcept { return matrix.rows(); }
    std::size_t dim() const noexcept { return matrix.cols(); }
};

/// Linear centered kernel alignment, computed in feature space:
///   ‖XcᵀYc‖²_F / (‖XcᵀXc‖_F · ‖YcᵀYc‖_F)
/// with Xc, Yc column-centered. Throws DegenerateSimilarity when either set is
/// constant across samples.
double linear_cka(const FeatureSet& student, const FeatureSet& teacher);

/// EMA-smoothed teacher-student gap. The first update adopts the raw gap.
class GapTracker {
public:
    explicit GapTracker(double momentum = 0.8);

    /// Records raw gap 1 - cka and returns the smoothed gap.
    double update(double cka);
    /// Same as update() but takes the raw gap directly (used for degenerate CKA).
    double update_raw(double raw_gap);

    double momentum() const noexcept { return momentum_; }
    double smoothed_gap() const noexcept { return smoothed_; }
    double raw_gap() const noexcept { return raw_; }
    bool initialized() const noexcept { return initialized_; }

private:
    double momentum_;
    double smoothed_ = 0.0;
    double raw_ = 0.0;
    bool initialized_ = false;
};

}  // namespace gpd
