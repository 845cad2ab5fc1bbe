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


#include "gpd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "gpd/errors.hpp"
#include "gpd/json_util.hpp"

namespace gpd {

namespace {

enum : std::uint64_t {
    kStreamStudentInit = 1,
    kStreamProjectionInit,
    kStreamProbe,
    kStreamOrder,
    kStreamDropout,
    kStreamTeacherInit,
    kStreamTeacherOrder,
};

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t count)
{
    Matrix out(count, m.cols());
    std::copy_n(m.data() + begin * m.cols(), count * m.cols(), out.data());
    return out;
}

Matrix stack(std::span<const TrialTensors* const> batch, Matrix TrialTensors::*field)
{
    const std::size_t cols = ((*batch[0]).*field).cols();
    Matrix out(batch.size() * kQuestions, cols);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Matrix& src = (*batch[i]).*field;
        std::copy_n(src.data(), src.size(), out.data() + i * kQuestions * cols);
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

void check_finite(const LossComponents& c, double total, int epoch, std::string_view who)
{
    const auto bad = [&](double v, const char* name) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(who) + " epoch " + std::to_string(epoch) + ": non-finite " + name);
        }
    };
    bad(c.question, "question_ce");
    bad(c.digit, "digit_ce");
    bad(c.feature, "feat_kd");
    bad(c.logit, "logit_kd");
    bad(total, "total loss");
}

std::array<double, 2> read_band(const nlohmann::json& j, std::string_view where)
{
    try {
        auto v = j.get<std::vector<double>>();
        if (v.size() != 2) {
            throw ConfigError(std::string(where) + ": expected [low, high]");
        }
        return {v[0], v[1]};
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(where) + ": expected [low, high]");
    }
}

ThresholdSet read_thresholds(const nlohmann::json& j, std::string_view where)
{
    try {
        auto v = j.get<std::vector<double>>();
        if (v.size() != 6) {
            throw ConfigError(std::string(where) + ": expected 6 thresholds");
        }
        return {v[0], v[1], v[2], v[3], v[4], v[5]};
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(where) + ": expected 6 thresholds");
    }
}

nlohmann::json optimizer_to_json(const OptimizerConfig& o)
{
    return {{"learning_rate", o.learning_rate},
            {"weight_decay", o.weight_decay},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"epsilon", o.epsilon}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig o, std::string_view where)
{
    using namespace json_util;
    require_known_keys(j, {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon"}, where);
    read_field(j, "learning_rate", o.learning_rate, where);
    read_field(j, "weight_decay", o.weight_decay, where);
    read_field(j, "beta1", o.beta1, where);
    read_field(j, "beta2", o.beta2, where);
    read_field(j, "epsilon", o.epsilon, where);
    return o;
}

}  // namespace

std::string_view variant_name(DistillVariant v) noexcept
{
    switch (v) {
        case DistillVariant::Full: return "full";
        case DistillVariant::NoLogitKd: return "no_logit_kd";
        case DistillVariant::NoFeatKd: return "no_feat_kd";
        case DistillVariant::NoProgWt: return "no_prog_wt";
        case DistillVariant::None: return "none";
    }
    return "unknown";
}

DistillVariant variant_from_name(std::string_view name)
{
    for (auto v : {DistillVariant::Full, DistillVariant::NoLogitKd, DistillVariant::NoFeatKd, DistillVariant::NoProgWt,
                   DistillVariant::None}) {
        if (variant_name(v) == name) {
            return v;
        }
    }
    throw ConfigError("unknown distill variant '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

ThresholdSet RunConfig::thresholds() const { return modality == Modality::Video ? router.video : router.audio; }

ScheduleConfig RunConfig::effective_schedule() const
{
    ScheduleConfig s = schedule;
    const auto& band = modality == Modality::Video ? video_gap_band : audio_gap_band;
    s.gap_low = band[0];
    s.gap_high = band[1];
    return s;
}

void RunConfig::validate() const
{
    if (epochs < 1) {
        throw ConfigError("run.epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("run.batch_size must be >= 1");
    }
    if (teacher_epochs < 1) {
        throw ConfigError("run.teacher_epochs must be >= 1");
    }
    if (probe_limit < 2) {
        throw ConfigError("run.probe_limit must be >= 2");
    }
    if (fold < 0) {
        throw ConfigError("run.fold must be >= 0");
    }
    if (!(router.momentum >= 0.0 && router.momentum < 1.0)) {
        throw ConfigError("router.momentum must lie in [0, 1)");
    }
    optimizer.validate();
    teacher_optimizer.validate();
    loss.validate();
    effective_schedule().validate();
    for (const auto& band : {video_gap_band, audio_gap_band}) {
        if (!(band[0] < band[1])) {
            throw ConfigError("gap band requires low < high");
        }
    }
    for (const auto& t : {router.video, router.audio}) {
        t.validate();
        t.shifted(router.shift).validate();
    }
    if (!(student.dropout >= 0.0 && student.dropout < 1.0)) {
        throw ConfigError("student.dropout must lie in [0, 1)");
    }
}

nlohmann::json run_config_to_json(const RunConfig& c)
{
    nlohmann::json onsets = nlohmann::json::array();
    for (const auto& o : c.schedule.onsets) {
        onsets.push_back({o.logit, o.feature});
    }
    return {
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"optimizer", optimizer_to_json(c.optimizer)},
        {"loss",
         {{"lambda_d", c.loss.digit},
          {"lambda_c", c.loss.distill},
          {"lambda_l", c.loss.logit},
          {"lambda_f", c.loss.feature},
          {"tau_kd", c.loss.temperature}}},
        {"schedule",
         {{"family", family_name(c.schedule.family)},
          {"onsets", onsets},
          {"tau_logit", c.schedule.tau_logit},
          {"tau_feature", c.schedule.tau_feature},
          {"ramp_length", c.schedule.ramp_length},
          {"video_gap", c.video_gap_band},
          {"audio_gap", c.audio_gap_band}}},
        {"router",
         {{"video_thresholds", c.router.video.as_array()},
          {"audio_thresholds", c.router.audio.as_array()},
          {"min_hold", c.router.min_hold},
          {"shift", c.router.shift},
          {"momentum", c.router.momentum}}},
        {"modality", modality_name(c.modality)},
        {"fold", c.fold},
        {"seed", c.seed},
        {"routing_enabled", c.routing_enabled},
        {"fixed_route", route_index(c.fixed_route)},
        {"variant", variant_name(c.variant)},
        {"probe_limit", c.probe_limit},
        {"student",
         {{"input", c.student.input},
          {"hidden", c.student.hidden},
          {"feature", c.student.feature},
          {"dropout", c.student.dropout}}},
        {"teacher",
         {{"input", c.teacher.input},
          {"hidden1", c.teacher.hidden1},
          {"hidden2", c.teacher.hidden2},
          {"feature", c.teacher.feature},
          {"epochs", c.teacher_epochs},
          {"optimizer", optimizer_to_json(c.teacher_optimizer)}}},
    };
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c)
{
    using namespace json_util;
    constexpr std::string_view where = "run";
    require_known_keys(j,
                       {"epochs", "batch_size", "optimizer", "loss", "schedule", "router", "modality", "fold", "seed",
                        "routing_enabled", "fixed_route", "variant", "probe_limit", "student", "teacher"},
                       where);
    read_field(j, "epochs", c.epochs, where);
    read_field(j, "batch_size", c.batch_size, where);
    read_field(j, "fold", c.fold, where);
    read_field(j, "seed", c.seed, where);
    read_field(j, "routing_enabled", c.routing_enabled, where);
    read_field(j, "probe_limit", c.probe_limit, where);
    if (j.contains("modality")) {
        std::string m;
        read_field(j, "modality", m, where);
        c.modality = modality_from_name(m);
    }
    if (j.contains("fixed_route")) {
        int r = 0;
        read_field(j, "fixed_route", r, where);
        c.fixed_route = route_from_index(r);
    }
    if (j.contains("variant")) {
        std::string v;
        read_field(j, "variant", v, where);
        c.variant = variant_from_name(v);
    }
    if (j.contains("optimizer")) {
        c.optimizer = optimizer_from_json(j["optimizer"], c.optimizer, "run.optimizer");
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        constexpr std::string_view lw = "run.loss";
        require_known_keys(l, {"lambda_d", "lambda_c", "lambda_l", "lambda_f", "tau_kd"}, lw);
        read_field(l, "lambda_d", c.loss.digit, lw);
        read_field(l, "lambda_c", c.loss.distill, lw);
        read_field(l, "lambda_l", c.loss.logit, lw);
        read_field(l, "lambda_f", c.loss.feature, lw);
        read_field(l, "tau_kd", c.loss.temperature, lw);
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        constexpr std::string_view sw = "run.schedule";
        require_known_keys(s, {"family", "onsets", "tau_logit", "tau_feature", "ramp_length", "video_gap", "audio_gap"},
                           sw);
        if (s.contains("family")) {
            std::string f;
            read_field(s, "family", f, sw);
            c.schedule.family = family_from_name(f);
        }
        if (s.contains("onsets")) {
            std::vector<std::vector<double>> onsets;
            read_field(s, "onsets", onsets, sw);
            if (onsets.size() != 4) {
                throw ConfigError("run.schedule.onsets: expected one [logit, feature] pair per route");
            }
            for (std::size_t r = 0; r < 4; ++r) {
                if (onsets[r].size() != 2) {
                    throw ConfigError("run.schedule.onsets: expected [logit, feature] pairs");
                }
                c.schedule.onsets[r] = {onsets[r][0], onsets[r][1]};
            }
        }
        read_field(s, "tau_logit", c.schedule.tau_logit, sw);
        read_field(s, "tau_feature", c.schedule.tau_feature, sw);
        read_field(s, "ramp_length", c.schedule.ramp_length, sw);
        if (s.contains("video_gap")) {
            c.video_gap_band = read_band(s["video_gap"], "run.schedule.video_gap");
        }
        if (s.contains("audio_gap")) {
            c.audio_gap_band = read_band(s["audio_gap"], "run.schedule.audio_gap");
        }
    }
    if (j.contains("router")) {
        const auto& r = j["router"];
        constexpr std::string_view rw = "run.router";
        require_known_keys(r, {"video_thresholds", "audio_thresholds", "min_hold", "shift", "momentum"}, rw);
        if (r.contains("video_thresholds")) {
            c.router.video = read_thresholds(r["video_thresholds"], "run.router.video_thresholds");
        }
        if (r.contains("audio_thresholds")) {
            c.router.audio = read_thresholds(r["audio_thresholds"], "run.router.audio_thresholds");
        }
        read_field(r, "min_hold", c.router.min_hold, rw);
        read_field(r, "shift", c.router.shift, rw);
        read_field(r, "momentum", c.router.momentum, rw);
    }
    if (j.contains("student")) {
        const auto& s = j["student"];
        constexpr std::string_view sw = "run.student";
        require_known_keys(s, {"input", "hidden", "feature", "dropout"}, sw);
        read_field(s, "input", c.student.input, sw);
        read_field(s, "hidden", c.student.hidden, sw);
        read_field(s, "feature", c.student.feature, sw);
        read_field(s, "dropout", c.student.dropout, sw);
    }
    if (j.contains("teacher")) {
        const auto& t = j["teacher"];
        constexpr std::string_view tw = "run.teacher";
        require_known_keys(t, {"input", "hidden1", "hidden2", "feature", "epochs", "optimizer"}, tw);
        read_field(t, "input", c.teacher.input, tw);
        read_field(t, "hidden1", c.teacher.hidden1, tw);
        read_field(t, "hidden2", c.teacher.hidden2, tw);
        read_field(t, "feature", c.teacher.feature, tw);
        read_field(t, "epochs", c.teacher_epochs, tw);
        if (t.contains("optimizer")) {
            c.teacher_optimizer = optimizer_from_json(t["optimizer"], c.teacher_optimizer, "run.teacher.optimizer");
        }
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Objectives

std::vector<TrialTensors> pack_trials(const std::vector<TrialRecord>& trials)
{
    std::vector<TrialTensors> out;
    out.reserve(trials.size());
    for (const auto& t : trials) {
        validate_trial(t);
        TrialTensors p;
        p.subject_id = t.subject_id;
        p.d_star = t.d_star;
        p.gsr = Matrix(kQuestions, t.segments[0].gsr.size());
        p.features = Matrix(kQuestions, t.segments[0].student_feat.size());
        for (std::size_t q = 0; q < kQuestions; ++q) {
            const auto& seg = t.segments[q];
            std::copy(seg.gsr.begin(), seg.gsr.end(), p.gsr.row(q).begin());
            std::copy(seg.student_feat.begin(), seg.student_feat.end(), p.features.row(q).begin());
            p.digits[q] = seg.digit;
            p.labels[q] = seg.label;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<TeacherTargets> teacher_targets(const TeacherNet& teacher, std::span<const TrialTensors> trials)
{
    std::vector<TeacherTargets> out;
    out.reserve(trials.size());
    for (const auto& t : trials) {
        auto o = teacher.forward(t.gsr);
        std::array<double, kQuestions> z{};
        for (std::size_t q = 0; q < kQuestions; ++q) {
            z[q] = o.logits(q, 1);
        }
        out.push_back({std::move(o.features), aggregate_evidence(z, t.digits)});
    }
    return out;
}

BatchResult student_objective(StudentNet& student, ProjectionHead& projection, std::span<const TrialTensors* const> batch,
                              std::span<const TeacherTargets* const> targets, const LossWeights& weights,
                              const DistillWeights& distill, Mode mode, Rng& rng, bool accumulate)
{
    if (batch.empty() || batch.size() != targets.size()) {
        throw DimensionError("student_objective: batch and targets differ");
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    StudentNet::Cache cache;
    const Matrix input = stack(batch, &TrialTensors::features);
    const NetOutput out = student.forward(input, mode, rng, cache);
    const Matrix projected = projection.project(out.features);

    Matrix grad_logits(out.logits.rows(), 2);
    Matrix grad_projected(projected.rows(), projected.cols());
    BatchResult result;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& trial = *batch[i];
        const auto& target = *targets[i];
        const std::size_t base = i * kQuestions;
        const Matrix logits = slice_rows(out.logits, base, kQuestions);
        const Matrix proj = slice_rows(projected, base, kQuestions);

        std::array<double, kQuestions> deceptive{};
        for (std::size_t q = 0; q < kQuestions; ++q) {
            deceptive[q] = logits(q, 1);
        }
        const EvidenceVector evidence = aggregate_evidence(deceptive, trial.digits);

        Matrix g_question;
        Matrix g_feature;
        std::array<double, kDigits> g_digit{};
        std::array<double, kDigits> g_logit{};
        LossComponents c;
        c.question = question_ce_from_logits(logits, trial.labels, accumulate ? &g_question : nullptr);
        c.digit = digit_ce(evidence, trial.d_star, accumulate ? &g_digit : nullptr);
        c.logit = logit_kd_loss(target.evidence, evidence, weights.temperature, accumulate ? &g_logit : nullptr);
        c.feature = feat_kd_loss(proj, target.features, accumulate ? &g_feature : nullptr);
        const double total = total_loss(c, weights, distill);

        result.components.question += scale * c.question;
        result.components.digit += scale * c.digit;
        result.components.logit += scale * c.logit;
        result.components.feature += scale * c.feature;
        result.total += scale * total;

        if (!accumulate) {
            continue;
        }
        const double logit_coef = weights.distill * weights.logit * distill.logit;
        const double feature_coef = weights.distill * weights.feature * distill.feature;
        for (std::size_t q = 0; q < kQuestions; ++q) {
            const auto d = static_cast<std::size_t>(trial.digits[q] - 1);
            const double g_evidence = weights.digit * g_digit[d] + logit_coef * g_logit[d];
            grad_logits(base + q, 0) += scale * g_question(q, 0);
            grad_logits(base + q, 1) += scale * (g_question(q, 1) + g_evidence);
            auto dst = grad_projected.row(base + q);
            auto src = g_feature.row(q);
            for (std::size_t k = 0; k < dst.size(); ++k) {
                dst[k] = scale * feature_coef * src[k];
            }
        }
    }
    if (accumulate) {
        const Matrix grad_features = projection.backward(out.features, grad_projected);
        student.backward(cache, grad_logits, grad_features);
    }
    return result;
}

BatchResult teacher_objective(TeacherNet& teacher, std::span<const TrialTensors* const> batch, const LossWeights& weights,
                              bool accumulate)
{
    if (batch.empty()) {
        throw DimensionError("teacher_objective: empty batch");
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    TeacherNet::Cache cache;
    const Matrix input = stack(batch, &TrialTensors::gsr);
    const NetOutput out = teacher.forward(input, cache);
    Matrix grad_logits(out.logits.rows(), 2);
    BatchResult result;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& trial = *batch[i];
        const std::size_t base = i * kQuestions;
        const Matrix logits = slice_rows(out.logits, base, kQuestions);
        std::array<double, kQuestions> deceptive{};
        for (std::size_t q = 0; q < kQuestions; ++q) {
            deceptive[q] = logits(q, 1);
        }
        const EvidenceVector evidence = aggregate_evidence(deceptive, trial.digits);
        Matrix g_question;
        std::array<double, kDigits> g_digit{};
        LossComponents c;
        c.question = question_ce_from_logits(logits, trial.labels, accumulate ? &g_question : nullptr);
        c.digit = digit_ce(evidence, trial.d_star, accumulate ? &g_digit : nullptr);
        result.components.question += scale * c.question;
        result.components.digit += scale * c.digit;
        result.total += scale * (c.question + weights.digit * c.digit);
        if (!accumulate) {
            continue;
        }
        for (std::size_t q = 0; q < kQuestions; ++q) {
            const auto d = static_cast<std::size_t>(trial.digits[q] - 1);
            grad_logits(base + q, 0) += scale * g_question(q, 0);
            grad_logits(base + q, 1) += scale * (g_question(q, 1) + weights.digit * g_digit[d]);
        }
    }
    if (accumulate) {
        teacher.backward(cache, grad_logits, Matrix());
    }
    return result;
}

void stderr_logger(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

// ---------------------------------------------------------------------------
// Training

TeacherNet pretrain_teacher(std::span<const TrialTensors> train, const RunConfig& cfg, const Logger& log)
{
    if (train.empty()) {
        throw DataError("pretrain_teacher: empty training split");
    }
    TeacherNet teacher(cfg.teacher, derive_seed(cfg.seed, kStreamTeacherInit));
    auto params = teacher.parameters();
    Rng order(derive_seed(cfg.seed, kStreamTeacherOrder));
    for (int epoch = 1; epoch <= cfg.teacher_epochs; ++epoch) {
        for (const auto& indices : make_batches(train.size(), cfg.batch_size, order)) {
            std::vector<const TrialTensors*> batch;
            for (auto i : indices) {
                batch.push_back(&train[i]);
            }
            for (auto* p : params) {
                p->zero_grad();
            }
            const auto r = teacher_objective(teacher, batch, cfg.loss, true);
            check_finite(r.components, r.total, epoch, "teacher");
            adam_step(params, cfg.teacher_optimizer);
        }
    }
    if (!teacher.parameters().empty() && !teacher.tensors().front().value.all_finite()) {
        log("teacher parameters are not finite after pretraining");
    }
    teacher.trained_epochs = cfg.teacher_epochs;
    teacher.freeze();
    return teacher;
}

DistillWeights apply_variant(DistillWeights w, DistillVariant variant)
{
    switch (variant) {
        case DistillVariant::Full: break;
        case DistillVariant::NoLogitKd: w.logit = 0.0; break;
        case DistillVariant::NoFeatKd: w.feature = 0.0; break;
        case DistillVariant::NoProgWt:
            w.logit = 1.0;
            w.feature = w.route == Route::NoFeature ? 0.0 : 1.0;
            break;
        case DistillVariant::None:
            w.logit = 0.0;
            w.feature = 0.0;
            break;
    }
    return w;
}

std::vector<Route> replay_routes(std::span<const double> raw_gaps, const RunConfig& cfg)
{
    GapTracker tracker(cfg.router.momentum);
    Router router(cfg.thresholds(), cfg.router.min_hold, cfg.router.shift);
    std::vector<Route> routes;
    for (std::size_t i = 0; i < raw_gaps.size(); ++i) {
        const double g = tracker.update_raw(raw_gaps[i]);
        if (!cfg.routing_enabled) {
            router.pin(cfg.fixed_route);
        } else if (i == 0) {
            router.start(g);
        } else {
            router.step(g);
        }
        routes.push_back(router.route());
    }
    return routes;
}

TrainResult train_student(std::span<const TrialTensors> train, const TeacherNet& teacher, const RunConfig& cfg,
                          const Logger& log)
{
    cfg.validate();
    if (!teacher.frozen()) {
        throw ContractViolation("train_student requires a frozen teacher");
    }
    if (train.empty()) {
        throw DataError("train_student: empty training split");
    }
    const std::uint64_t teacher_checksum = teacher.checksum();

    TrainResult result{StudentNet(cfg.student, derive_seed(cfg.seed, kStreamStudentInit)),
                       ProjectionHead(cfg.student.feature, cfg.teacher.feature,
                                      derive_seed(cfg.seed, kStreamProjectionInit)),
                       {},
                       {}};
    StudentNet& student = result.student;
    ProjectionHead& projection = result.projection;

    const auto targets = teacher_targets(teacher, train);

    // Fixed probe of (trial, question) rows used for every epoch's CKA.
    const std::size_t total_rows = train.size() * kQuestions;
    std::vector<std::size_t> probe_rows(total_rows);
    std::iota(probe_rows.begin(), probe_rows.end(), 0);
    if (total_rows > cfg.probe_limit) {
        Rng probe_rng(derive_seed(cfg.seed, kStreamProbe));
        probe_rng.shuffle(probe_rows.begin(), probe_rows.end());
        probe_rows.resize(cfg.probe_limit);
        std::sort(probe_rows.begin(), probe_rows.end());
    }
    Matrix probe_input(probe_rows.size(), cfg.student.input);
    Matrix probe_teacher(probe_rows.size(), cfg.teacher.feature);
    for (std::size_t i = 0; i < probe_rows.size(); ++i) {
        const std::size_t trial = probe_rows[i] / kQuestions;
        const std::size_t q = probe_rows[i] % kQuestions;
        auto src = train[trial].features.row(q);
        std::copy(src.begin(), src.end(), probe_input.row(i).begin());
        auto tsrc = targets[trial].features.row(q);
        std::copy(tsrc.begin(), tsrc.end(), probe_teacher.row(i).begin());
    }
    const FeatureSet teacher_set(probe_teacher);

    GapTracker tracker(cfg.router.momentum);
    Router router(cfg.thresholds(), cfg.router.min_hold, cfg.router.shift);
    const ScheduleConfig schedule = cfg.effective_schedule();
    if (cfg.modality == Modality::Video && router.effective_thresholds().joint_interval_empty()) {
        log("video routing thresholds leave the joint-route entry interval empty; route 2 is only reachable "
            "by initial assignment or stepping");
    }

    auto measure_gap = [&](int epoch, EpochTrace& row) {
        const NetOutput out = student.forward(probe_input);
        try {
            const double cka = linear_cka(FeatureSet(out.features), teacher_set);
            row.ema_gap = tracker.update(cka);
        } catch (const DegenerateSimilarity&) {
            log("epoch " + std::to_string(epoch) + ": degenerate CKA, using raw gap 1.0");
            row.ema_gap = tracker.update_raw(1.0);
            row.degenerate = true;
        }
        row.raw_gap = tracker.raw_gap();
    };

    auto control = [&](int epoch, bool first) {
        EpochTrace row;
        row.epoch = epoch;
        measure_gap(epoch, row);
        RouterDecision decision{};
        if (!cfg.routing_enabled) {
            router.pin(cfg.fixed_route);
            decision = {router.route(), classify_gap(row.ema_gap, router.effective_thresholds()), 0, false};
        } else if (first) {
            decision = router.start(row.ema_gap);
        } else {
            decision = router.step(row.ema_gap);
        }
        row.indicated = decision.indicated;
        row.route = decision.route;
        row.hold = decision.hold;
        const DistillWeights w = apply_variant(schedule_weights(schedule, epoch, row.route, row.ema_gap), cfg.variant);
        row.w_logit = w.logit;
        row.w_feature = w.feature;
        row.alpha_gap = w.alpha_gap;
        return std::pair{row, w};
    };

    std::vector<Parameter*> params = student.parameters();
    for (auto* p : projection.parameters()) {
        params.push_back(p);
    }
    Rng order(derive_seed(cfg.seed, kStreamOrder));
    Rng dropout(derive_seed(cfg.seed, kStreamDropout));

    auto [row, weights] = control(1, true);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        result.trace.push_back(row);
        EpochLosses epoch_losses;
        epoch_losses.epoch = epoch;
        for (const auto& indices : make_batches(train.size(), cfg.batch_size, order)) {
            std::vector<const TrialTensors*> batch;
            std::vector<const TeacherTargets*> batch_targets;
            for (auto i : indices) {
                batch.push_back(&train[i]);
                batch_targets.push_back(&targets[i]);
            }
            for (auto* p : params) {
                p->zero_grad();
            }
            const auto r = student_objective(student, projection, batch, batch_targets, cfg.loss, weights, Mode::Train,
                                             dropout, true);
            check_finite(r.components, r.total, epoch, "student");
            const double share = static_cast<double>(indices.size()) / static_cast<double>(train.size());
            epoch_losses.components.question += share * r.components.question;
            epoch_losses.components.digit += share * r.components.digit;
            epoch_losses.components.feature += share * r.components.feature;
            epoch_losses.components.logit += share * r.components.logit;
            epoch_losses.total += share * r.total;
            adam_step(params, cfg.optimizer);
        }
        result.losses.push_back(epoch_losses);
        if (epoch < cfg.epochs) {
            std::tie(row, weights) = control(epoch + 1, false);
        }
    }

    if (teacher.checksum() != teacher_checksum) {
        throw ContractViolation("teacher parameters changed during student training");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

template <typename Net>
std::vector<TrialPrediction> predict_with(const Net& net, std::span<const TrialTensors> trials, Matrix TrialTensors::*input)
{
    std::vector<TrialPrediction> out;
    out.reserve(trials.size());
    for (const auto& t : trials) {
        const NetOutput o = net.forward(t.*input);
        TrialPrediction p;
        p.subject_id = t.subject_id;
        p.d_star = t.d_star;
        p.labels = t.labels;
        std::array<double, kQuestions> deceptive{};
        const auto prob = deception_probability(o.logits);
        for (std::size_t q = 0; q < kQuestions; ++q) {
            deceptive[q] = o.logits(q, 1);
            p.probability[q] = prob[q];
        }
        p.evidence = aggregate_evidence(deceptive, t.digits);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

std::vector<TrialPrediction> predict(const StudentNet& student, std::span<const TrialTensors> trials)
{
    return predict_with(student, trials, &TrialTensors::features);
}

std::vector<TrialPrediction> predict(const TeacherNet& teacher, std::span<const TrialTensors> trials)
{
    return predict_with(teacher, trials, &TrialTensors::gsr);
}

std::array<int, kDigits> rank_digits(const EvidenceVector& e)
{
    std::array<int, kDigits> digits{};
    std::iota(digits.begin(), digits.end(), 1);
    std::stable_sort(digits.begin(), digits.end(), [&](int a, int b) { return e[a] > e[b]; });
    return digits;
}

int top_digit(const EvidenceVector& e) { return rank_digits(e)[0]; }

double f1_score(std::span<const int> predicted, std::span<const int> labels)
{
    if (predicted.size() != labels.size()) {
        throw DimensionError("f1_score: predictions and labels differ in length");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predicted[i] == 1 && labels[i] == 1) {
            ++tp;
        } else if (predicted[i] == 1) {
            ++fp;
        } else if (labels[i] == 1) {
            ++fn;
        }
    }
    if (tp == 0) {
        return 0.0;
    }
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double auc_score(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) {
        throw DimensionError("auc_score: scores and labels differ in length");
    }
    // Mid-ranks over the pooled sample; U = R_pos - n_pos(n_pos+1)/2.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
        }
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            rank[order[k]] = mid;
        }
        i = j + 1;
    }
    double pos = 0.0, neg = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            pos += 1.0;
            rank_sum += rank[i];
        } else {
            neg += 1.0;
        }
    }
    if (pos == 0.0 || neg == 0.0) {
        return 0.5;
    }
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricsReport evaluate(std::span<const TrialPrediction> predictions)
{
    if (predictions.empty()) {
        throw DataError("evaluate: empty split");
    }
    MetricsReport m;
    std::vector<double> scores;
    std::vector<int> predicted;
    std::vector<int> labels;
    std::size_t hit1 = 0, hit2 = 0;
    for (const auto& p : predictions) {
        const auto ranking = rank_digits(p.evidence);
        hit1 += ranking[0] == p.d_star ? 1 : 0;
        hit2 += (ranking[0] == p.d_star || ranking[1] == p.d_star) ? 1 : 0;
        for (std::size_t q = 0; q < kQuestions; ++q) {
            scores.push_back(p.probability[q]);
            predicted.push_back(p.probability[q] > 0.5 ? 1 : 0);
            labels.push_back(p.labels[q]);
        }
    }
    m.n_trials = predictions.size();
    m.n_questions = labels.size();
    m.top1 = static_cast<double>(hit1) / static_cast<double>(m.n_trials);
    m.top2 = static_cast<double>(hit2) / static_cast<double>(m.n_trials);
    m.f1 = f1_score(predicted, labels);
    m.auc = auc_score(scores, labels);
    return m;
}

MetricsReport aggregate_folds(std::span<const MetricsReport> folds)
{
    if (folds.empty()) {
        throw DataError("aggregate_folds: no fold reports");
    }
    MetricsReport out;
    for (const auto& f : folds) {
        out.n_trials += f.n_trials;
        out.n_questions += f.n_questions;
    }
    for (const auto& f : folds) {
        const double wt = static_cast<double>(f.n_trials) / static_cast<double>(out.n_trials);
        const double wq = static_cast<double>(f.n_questions) / static_cast<double>(out.n_questions);
        out.top1 += wt * f.top1;
        out.top2 += wt * f.top2;
        out.f1 += wq * f.f1;
        out.auc += wq * f.auc;
    }
    return out;
}

TransitionCell& TransitionCell::operator+=(const TransitionCell& o)
{
    total += o.total;
    teacher_correct += o.teacher_correct;
    teacher_wrong += o.teacher_wrong;
    teacher_consistent += o.teacher_consistent;
    teacher_inconsistent += o.teacher_inconsistent;
    return *this;
}

std::size_t TransitionStats::trials() const noexcept
{
    return both_wrong.total + repaired.total + dropped.total + both_correct.total;
}

TransitionStats& TransitionStats::operator+=(const TransitionStats& o)
{
    both_wrong += o.both_wrong;
    repaired += o.repaired;
    dropped += o.dropped;
    both_correct += o.both_correct;
    return *this;
}

TransitionStats transition_stats(std::span<const TrialPrediction> baseline, std::span<const TrialPrediction> distilled,
                                 std::span<const TrialPrediction> teacher)
{
    if (baseline.size() != distilled.size() || baseline.size() != teacher.size()) {
        throw ProtocolError("transition_stats: prediction sets cover different trial counts");
    }
    TransitionStats stats;
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        if (baseline[i].subject_id != distilled[i].subject_id || baseline[i].subject_id != teacher[i].subject_id ||
            baseline[i].d_star != distilled[i].d_star || baseline[i].d_star != teacher[i].d_star) {
            throw ProtocolError("transition_stats: trial " + std::to_string(i) + " differs between prediction sets");
        }
        const int truth = baseline[i].d_star;
        const bool base_ok = top_digit(baseline[i].evidence) == truth;
        const int distilled_digit = top_digit(distilled[i].evidence);
        const int teacher_digit = top_digit(teacher[i].evidence);
        const bool dist_ok = distilled_digit == truth;

        TransitionCell* cell = nullptr;
        if (!base_ok && !dist_ok) {
            cell = &stats.both_wrong;
        } else if (!base_ok) {
            cell = &stats.repaired;
        } else if (!dist_ok) {
            cell = &stats.dropped;
        } else {
            cell = &stats.both_correct;
        }
        cell->total += 1;
        (teacher_digit == truth ? cell->teacher_correct : cell->teacher_wrong) += 1;
        (distilled_digit == teacher_digit ? cell->teacher_consistent : cell->teacher_inconsistent) += 1;
    }
    return stats;
}

}  // namespace gpd
