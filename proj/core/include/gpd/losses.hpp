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

#include <array>
#include <span>

#include "gpd/nets.hpp"
#include "gpd/numerics.hpp"
#include "gpd/scheduler.hpp"

namespace gpd {

inline constexpr std::size_t kDigits = 10;
inline constexpr std::size_t kQuestions = 20;

/// Digit-level evidence; index 0 holds digit 1.
struct EvidenceVector {
    std::array<double, kDigits> scores{};

    double operator[](int digit) const { return scores[static_cast<std::size_t>(digit - 1)]; }
};

struct LossWeights {
    double digit = 0.3;        ///< λ_d
    double distill = 1.0;      ///< λ_c
    double logit = 0.7;        ///< λ_l
    double feature = 0.2;      ///< λ_f
    double temperature = 2.0;  ///< τ_kd

    void validate() const;
};

/// Sums the deceptive-class logit of the two segments that query each digit.
/// Throws ProtocolError unless every digit 1..10 appears exactly twice.
EvidenceVector aggregate_evidence(std::span<const double> deceptive_logits, std::span<const int> digits);

/// Mean over rows of ‖projected - teacher‖². Writes dL/dprojected when @p grad is non-null.
double feat_kd_loss(const Matrix& projected_student, const Matrix& teacher_features, Matrix* grad = nullptr);
/// Projects the student features first.
double feat_kd_loss(const Matrix& student_features, const Matrix& teacher_features, const ProjectionHead& projection);

/// τ²·KL(softmax(E_T/τ) ‖ softmax(E_S/τ)) in nats. @p grad receives dL/dE_S.
double logit_kd_loss(const EvidenceVector& teacher, const EvidenceVector& student, double temperature,
                     std::array<double, kDigits>* grad = nullptr);

/// Mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12].
double question_ce(std::span<const double> probabilities, std::span<const int> labels);

/// question_ce on p = softmax(logits)_1. @p grad receives dL/dlogits (rows x 2).
double question_ce_from_logits(const Matrix& logits, std::span<const int> labels, Matrix* grad = nullptr);

/// -log softmax(E)_{d_star}. @p grad receives dL/dE.
double digit_ce(const EvidenceVector& evidence, int d_star, std::array<double, kDigits>* grad = nullptr);

struct LossComponents {
    double question = 0.0;
    double digit = 0.0;
    double feature = 0.0;
    double logit = 0.0;
};

/// L_que + λ_d·L_digit + λ_c·(λ_f·w_f·L_feat + λ_l·w_l·L_logit).
double total_loss(const LossComponents& c, const LossWeights& weights, const DistillWeights& distill);

}  // namespace gpd
