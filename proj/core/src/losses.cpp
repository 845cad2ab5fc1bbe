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


#include "gpd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gpd/errors.hpp"

namespace gpd {

namespace {

constexpr double kProbClamp = 1e-12;

}  // namespace

void LossWeights::validate() const
{
    if (!(digit >= 0.0 && distill >= 0.0 && logit >= 0.0 && feature >= 0.0)) {
        throw ConfigError("loss weights must be >= 0");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("distillation temperature must be > 0");
    }
}

EvidenceVector aggregate_evidence(std::span<const double> deceptive_logits, std::span<const int> digits)
{
    if (deceptive_logits.size() != digits.size()) {
        throw DimensionError("aggregate_evidence: logits and digit map differ in length");
    }
    std::array<int, kDigits> seen{};
    EvidenceVector e;
    for (std::size_t q = 0; q < digits.size(); ++q) {
        const int d = digits[q];
        if (d < 1 || d > static_cast<int>(kDigits)) {
            throw ProtocolError("aggregate_evidence: digit " + std::to_string(d) + " outside 1..10");
        }
        e.scores[static_cast<std::size_t>(d - 1)] += deceptive_logits[q];
        seen[static_cast<std::size_t>(d - 1)] += 1;
    }
    for (std::size_t d = 0; d < kDigits; ++d) {
        if (seen[d] != 2) {
            throw ProtocolError("aggregate_evidence: digit " + std::to_string(d + 1) + " queried " +
                                std::to_string(seen[d]) + " times, expected 2");
        }
    }
    return e;
}

double feat_kd_loss(const Matrix& projected_student, const Matrix& teacher_features, Matrix* grad)
{
    if (projected_student.rows() != teacher_features.rows() || projected_student.cols() != teacher_features.cols()) {
        throw DimensionError("feat_kd_loss: projected student and teacher features differ in shape");
    }
    const double n = static_cast<double>(projected_student.rows());
    if (grad) {
        *grad = Matrix(projected_student.rows(), projected_student.cols());
    }
    double total = 0.0;
    auto s = projected_student.values();
    auto t = teacher_features.values();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double diff = s[i] - t[i];
        total += diff * diff;
        if (grad) {
            grad->values()[i] = 2.0 * diff / n;
        }
    }
    return total / n;
}

double feat_kd_loss(const Matrix& student_features, const Matrix& teacher_features, const ProjectionHead& projection)
{
    if (projection.out_dim() != teacher_features.cols()) {
        throw DimensionError("feat_kd_loss: projection output does not match teacher feature width");
    }
    return feat_kd_loss(projection.project(student_features), teacher_features);
}

double logit_kd_loss(const EvidenceVector& teacher, const EvidenceVector& student, double temperature,
                     std::array<double, kDigits>* grad)
{
    if (!(temperature > 0.0)) {
        throw ConfigError("logit_kd_loss: temperature must be > 0");
    }
    const auto pt = softmax(teacher.scores, temperature);
    const auto ps = softmax(student.scores, temperature);
    std::array<double, kDigits> scaled_s{};
    for (std::size_t d = 0; d < kDigits; ++d) {
        scaled_s[d] = student.scores[d] / temperature;
    }
    const double lse_s = log_sum_exp(scaled_s);
    std::array<double, kDigits> scaled_t{};
    for (std::size_t d = 0; d < kDigits; ++d) {
        scaled_t[d] = teacher.scores[d] / temperature;
    }
    const double lse_t = log_sum_exp(scaled_t);

    double kl = 0.0;
    for (std::size_t d = 0; d < kDigits; ++d) {
        if (pt[d] > 0.0) {
            kl += pt[d] * ((scaled_t[d] - lse_t) - (scaled_s[d] - lse_s));
        }
    }
    if (grad) {
        for (std::size_t d = 0; d < kDigits; ++d) {
            (*grad)[d] = temperature * (ps[d] - pt[d]);
        }
    }
    return temperature * temperature * std::max(kl, 0.0);
}

double question_ce(std::span<const double> probabilities, std::span<const int> labels)
{
    if (probabilities.size() != labels.size() || probabilities.empty()) {
        throw DimensionError("question_ce: probabilities and labels differ in length");
    }
    double total = 0.0;
    for (std::size_t q = 0; q < probabilities.size(); ++q) {
        const double p = std::clamp(probabilities[q], kProbClamp, 1.0 - kProbClamp);
        total -= labels[q] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(probabilities.size());
}

double question_ce_from_logits(const Matrix& logits, std::span<const int> labels, Matrix* grad)
{
    if (logits.cols() != 2 || logits.rows() != labels.size() || labels.empty()) {
        throw DimensionError("question_ce_from_logits: expected rows x 2 logits matching labels");
    }
    const double n = static_cast<double>(labels.size());
    if (grad) {
        *grad = Matrix(logits.rows(), 2);
    }
    double total = 0.0;
    for (std::size_t q = 0; q < labels.size(); ++q) {
        const double raw = sigmoid(logits(q, 1) - logits(q, 0));
        const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
        const bool positive = labels[q] == 1;
        total -= positive ? std::log(p) : std::log(1.0 - p);
        if (grad) {
            // Zero gradient once the probability is clamped.
            double dz = 0.0;
            if (raw == p) {
                const double dl_dp = positive ? -1.0 / p : 1.0 / (1.0 - p);
                dz = dl_dp * p * (1.0 - p) / n;
            }
            (*grad)(q, 1) = dz;
            (*grad)(q, 0) = -dz;
        }
    }
    return total / n;
}

double digit_ce(const EvidenceVector& evidence, int d_star, std::array<double, kDigits>* grad)
{
    if (d_star < 1 || d_star > static_cast<int>(kDigits)) {
        throw ProtocolError("digit_ce: concealed digit " + std::to_string(d_star) + " outside 1..10");
    }
    const auto target = static_cast<std::size_t>(d_star - 1);
    const double lse = log_sum_exp(evidence.scores);
    if (grad) {
        const auto p = softmax(evidence.scores);
        for (std::size_t d = 0; d < kDigits; ++d) {
            (*grad)[d] = p[d] - (d == target ? 1.0 : 0.0);
        }
    }
    return lse - evidence.scores[target];
}

double total_loss(const LossComponents& c, const LossWeights& w, const DistillWeights& distill)
{
    const double kd = w.feature * distill.feature * c.feature + w.logit * distill.logit * c.logit;
    return c.question + w.digit * c.digit + w.distill * kd;
}

}  // namespace gpd
