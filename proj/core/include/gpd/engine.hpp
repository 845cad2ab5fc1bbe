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
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpd/cka.hpp"
#include "gpd/data.hpp"
#include "gpd/losses.hpp"
#include "gpd/nets.hpp"
#include "gpd/router.hpp"
#include "gpd/scheduler.hpp"

namespace gpd {

enum class DistillVariant { Full, NoLogitKd, NoFeatKd, NoProgWt, None };

std::string_view variant_name(DistillVariant v) noexcept;
DistillVariant variant_from_name(std::string_view name);

struct RouterConfig {
    ThresholdSet video = ThresholdSet::video();
    ThresholdSet audio = ThresholdSet::audio();
    std::size_t min_hold = 3;
    double shift = 0.0;     ///< Δ added to every threshold
    double momentum = 0.8;  ///< EMA μ
};

struct RunConfig {
    int epochs = 120;
    std::size_t batch_size = 16;  ///< whole trials per minibatch
    OptimizerConfig optimizer;
    LossWeights loss;
    ScheduleConfig schedule;
    std::array<double, 2> video_gap_band{0.40, 0.62};
    std::array<double, 2> audio_gap_band{0.46, 0.76};
    RouterConfig router;
    Modality modality = Modality::Video;
    int fold = 0;
    std::uint64_t seed = 42;
    bool routing_enabled = true;
    Route fixed_route = Route::Joint;
    DistillVariant variant = DistillVariant::Full;
    std::size_t probe_limit = 512;
    StudentDims student;
    TeacherDims teacher;
    int teacher_epochs = 30;
    OptimizerConfig teacher_optimizer{3e-4, 1e-4, 0.9, 0.999, 1e-8};

    ThresholdSet thresholds() const;
    /// Schedule with the modality's gap band applied.
    ScheduleConfig effective_schedule() const;
    void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// A trial packed into matrices for batched forward passes.
struct TrialTensors {
    std::string subject_id;
    int d_star = 1;
    Matrix gsr;       ///< 20 x 448
    Matrix features;  ///< 20 x 768
    std::array<int, kQuestions> digits{};
    std::array<int, kQuestions> labels{};
};

std::vector<TrialTensors> pack_trials(const std::vector<TrialRecord>& trials);

/// Frozen-teacher outputs reused across epochs.
struct TeacherTargets {
    Matrix features;  ///< 20 x D_T
    EvidenceVector evidence;
};

std::vector<TeacherTargets> teacher_targets(const TeacherNet& teacher, std::span<const TrialTensors> trials);

struct BatchResult {
    LossComponents components;  ///< means over the batch's trials
    double total = 0.0;
};

/// Mean objective over the given trials. When @p accumulate is set, adds
/// gradients of the mean total loss to the student and projection parameters.
BatchResult student_objective(StudentNet& student, ProjectionHead& projection, std::span<const TrialTensors* const> batch,
                              std::span<const TeacherTargets* const> targets, const LossWeights& weights,
                              const DistillWeights& distill, Mode mode, Rng& rng, bool accumulate);

/// L_que + λ_d·L_digit on the teacher's own GSR predictions.
BatchResult teacher_objective(TeacherNet& teacher, std::span<const TrialTensors* const> batch, const LossWeights& weights,
                              bool accumulate);

using Logger = std::function<void(std::string_view)>;
/// Writes "warning: ..." lines to stderr.
void stderr_logger(std::string_view message);

/// Trains a fresh teacher on GSR and freezes it.
TeacherNet pretrain_teacher(std::span<const TrialTensors> train, const RunConfig& cfg, const Logger& log = stderr_logger);

struct EpochTrace {
    int epoch = 0;
    double raw_gap = 0.0;
    double ema_gap = 0.0;
    std::optional<Route> indicated;
    Route route = Route::NoFeature;
    std::size_t hold = 0;
    double w_logit = 0.0;
    double w_feature = 0.0;
    double alpha_gap = 0.0;
    bool degenerate = false;
};

struct EpochLosses {
    int epoch = 0;
    LossComponents components;
    double total = 0.0;
};

struct TrainResult {
    StudentNet student;
    ProjectionHead projection;
    std::vector<EpochTrace> trace;
    std::vector<EpochLosses> losses;
};

/// Applies the ablation variant to scheduled weights.
DistillWeights apply_variant(DistillWeights w, DistillVariant variant);

/// Replays raw gaps through a fresh gap tracker and router.
std::vector<Route> replay_routes(std::span<const double> raw_gaps, const RunConfig& cfg);

/// GPD student training against a frozen teacher. Throws ContractViolation if
/// the teacher is not frozen and NumericError on non-finite losses.
TrainResult train_student(std::span<const TrialTensors> train, const TeacherNet& teacher, const RunConfig& cfg,
                          const Logger& log = stderr_logger);

struct TrialPrediction {
    std::string subject_id;
    int d_star = 1;
    EvidenceVector evidence;
    std::array<double, kQuestions> probability{};
    std::array<int, kQuestions> labels{};
};

std::vector<TrialPrediction> predict(const StudentNet& student, std::span<const TrialTensors> trials);
std::vector<TrialPrediction> predict(const TeacherNet& teacher, std::span<const TrialTensors> trials);

/// Digits 1..10 by descending evidence; ties go to the lower digit.
std::array<int, kDigits> rank_digits(const EvidenceVector& e);
int top_digit(const EvidenceVector& e);

/// F1 with label 1 positive; 0 when there are no true positives.
double f1_score(std::span<const int> predicted, std::span<const int> labels);
/// Mann-Whitney AUC with ties credited 0.5. Returns 0.5 if a class is absent.
double auc_score(std::span<const double> scores, std::span<const int> labels);

struct MetricsReport {
    double top1 = 0.0;
    double top2 = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    std::size_t n_trials = 0;
    std::size_t n_questions = 0;
};

/// Throws DataError on an empty split.
MetricsReport evaluate(std::span<const TrialPrediction> predictions);

/// Top-k weighted by trial counts, F1/AUC by question counts.
MetricsReport aggregate_folds(std::span<const MetricsReport> folds);

struct TransitionCell {
    std::size_t total = 0;
    std::size_t teacher_correct = 0;
    std::size_t teacher_wrong = 0;
    std::size_t teacher_consistent = 0;
    std::size_t teacher_inconsistent = 0;

    TransitionCell& operator+=(const TransitionCell& o);
    bool operator==(const TransitionCell&) const = default;
};

struct TransitionStats {
    TransitionCell both_wrong;
    TransitionCell repaired;
    TransitionCell dropped;
    TransitionCell both_correct;

    std::size_t trials() const noexcept;
    TransitionStats& operator+=(const TransitionStats& o);
    bool operator==(const TransitionStats&) const = default;
};

/// Throws ProtocolError when the three prediction sets are not over the same trials.
TransitionStats transition_stats(std::span<const TrialPrediction> baseline, std::span<const TrialPrediction> distilled,
                                 std::span<const TrialPrediction> teacher);

}  // namespace gpd
