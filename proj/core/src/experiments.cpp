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


#include "gpd/experiments.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "gpd/errors.hpp"
#include "gpd/json_util.hpp"

namespace gpd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg)
{
    return {{"generator", generator_config_to_json(cfg.generator)}, {"run", run_config_to_json(cfg.run)}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base)
{
    json_util::require_known_keys(j, {"generator", "run"}, "config");
    if (j.contains("generator")) {
        base.generator = generator_config_from_json(j["generator"], base.generator);
    }
    if (j.contains("run")) {
        base.run = run_config_from_json(j["run"], base.run);
    }
    base.generator.validate();
    base.run.validate();
    if (base.run.fold >= static_cast<int>(base.generator.folds)) {
        throw ConfigError("run.fold " + std::to_string(base.run.fold) + " out of range for " +
                          std::to_string(base.generator.folds) + " folds");
    }
    return base;
}

void apply_override(nlohmann::json& doc, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' must have the form key.path=value");
    }
    const std::string_view path = assignment.substr(0, eq);
    const std::string text(assignment.substr(eq + 1));

    nlohmann::json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key(path.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
        if (key.empty()) {
            throw ConfigError("override '" + std::string(assignment) + "' has an empty key segment");
        }
        if (!node->is_object()) {
            throw ConfigError("override '" + std::string(path) + "': '" + key + "' is not inside an object");
        }
        node = &(*node)[key];
        if (dot == std::string_view::npos) {
            break;
        }
        start = dot + 1;
    }
    auto parsed = nlohmann::json::parse(text, nullptr, false);
    *node = parsed.is_discarded() ? nlohmann::json(text) : parsed;
}

ExperimentConfig load_experiment_config(const std::optional<fs::path>& file, std::span<const std::string> overrides)
{
    nlohmann::json doc = experiment_config_to_json({});
    if (file) {
        std::ifstream in(*file);
        if (!in) {
            throw ConfigError("cannot open config file " + file->string());
        }
        nlohmann::json user;
        try {
            user = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(file->string() + ": " + e.what());
        }
        json_util::require_known_keys(user, {"generator", "run"}, "config");
        for (const auto& section : {"generator", "run"}) {
            if (user.contains(section) && !user[section].is_object()) {
                throw ConfigError(std::string("config.") + section + ": expected a JSON object");
            }
        }
        doc.merge_patch(user);
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    return experiment_config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Output helpers

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), end);
}

void write_file_atomic(const fs::path& path, std::string_view content)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw DataError("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

std::string training_csv(std::span<const EpochLosses> losses)
{
    std::string s = "epoch,question_ce,digit_ce,feat_kd,logit_kd,total\n";
    for (const auto& l : losses) {
        s += std::to_string(l.epoch) + ',' + format_double(l.components.question) + ',' +
             format_double(l.components.digit) + ',' + format_double(l.components.feature) + ',' +
             format_double(l.components.logit) + ',' + format_double(l.total) + '\n';
    }
    return s;
}

std::string route_trace_csv(std::span<const EpochTrace> trace)
{
    std::string s = "epoch,raw_gap,ema_gap,indicated_state,route,hold,w_l,w_f,alpha_gap\n";
    for (const auto& t : trace) {
        s += std::to_string(t.epoch) + ',' + format_double(t.raw_gap) + ',' + format_double(t.ema_gap) + ',' +
             (t.indicated ? std::to_string(route_index(*t.indicated)) : std::string("band")) + ',' +
             std::to_string(route_index(t.route)) + ',' + std::to_string(t.hold) + ',' + format_double(t.w_logit) +
             ',' + format_double(t.w_feature) + ',' + format_double(t.alpha_gap) + '\n';
    }
    return s;
}

std::string evidence_csv(std::span<const TrialPrediction> predictions, std::span<const int> folds)
{
    if (predictions.size() != folds.size()) {
        throw DimensionError("evidence_csv: one fold index per prediction required");
    }
    std::string s = "subject_id,fold,d_star,predicted";
    for (std::size_t d = 1; d <= kDigits; ++d) {
        s += ",e" + std::to_string(d);
    }
    s += '\n';
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        s += p.subject_id + ',' + std::to_string(folds[i]) + ',' + std::to_string(p.d_star) + ',' +
             std::to_string(top_digit(p.evidence));
        for (double e : p.evidence.scores) {
            s += ',' + format_double(e);
        }
        s += '\n';
    }
    return s;
}

namespace {

std::string metrics_row(const std::string& scope, const MetricsReport& m)
{
    return scope + ',' + format_double(m.top1) + ',' + format_double(m.top2) + ',' + format_double(m.f1) + ',' +
           format_double(m.auc) + ',' + std::to_string(m.n_trials) + ',' + std::to_string(m.n_questions) + '\n';
}

std::mutex log_mutex;

Logger prefixed_logger(std::string prefix)
{
    return [prefix = std::move(prefix)](std::string_view message) {
        std::lock_guard lock(log_mutex);
        std::cerr << "warning: [" << prefix << "] " << message << '\n';
    };
}

std::string slug(std::string_view label)
{
    std::string s;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!s.empty() && s.back() != '-') {
            s += '-';
        }
    }
    while (!s.empty() && s.back() == '-') {
        s.pop_back();
    }
    return s;
}

}  // namespace

std::string metrics_csv(std::span<const FoldMetrics> folds)
{
    std::string s = "scope,top1,top2,f1,auc,n_trials,n_questions\n";
    std::vector<MetricsReport> reports;
    for (const auto& f : folds) {
        s += metrics_row("fold" + std::to_string(f.fold), f.report);
        reports.push_back(f.report);
    }
    if (!reports.empty()) {
        s += metrics_row("all", aggregate_folds(reports));
    }
    return s;
}

void run_parallel(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task)
{
    std::vector<std::exception_ptr> errors(count);
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::mutex mutex;
        std::size_t next = 0;
        auto worker = [&] {
            for (;;) {
                std::size_t i = 0;
                {
                    std::lock_guard lock(mutex);
                    if (next >= count) {
                        return;
                    }
                    i = next++;
                }
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::vector<std::jthread> threads;
        for (std::size_t t = 0; t < std::min(jobs, count); ++t) {
            threads.emplace_back(worker);
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

// ---------------------------------------------------------------------------
// Workspace

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}

fs::path Workspace::dataset_path(Modality m) const
{
    return root_ / "data" / (std::string(modality_name(m)) + ".jsonl");
}

fs::path Workspace::teacher_path(int fold) const
{
    return root_ / "teachers" / ("fold" + std::to_string(fold) + ".ckpt");
}

fs::path Workspace::run_dir(Modality m, std::string_view tag, int fold) const
{
    return root_ / "runs" / std::string(modality_name(m)) / std::string(tag) / ("fold" + std::to_string(fold));
}

std::vector<TrialRecord> Workspace::load_dataset(Modality m) const
{
    const auto path = dataset_path(m);
    if (!fs::exists(path)) {
        throw DataError("dataset " + path.string() + " not found; run `gpd generate --out " + root_.string() +
                        "` first");
    }
    return read_dataset(path);
}

TeacherNet Workspace::load_teacher(int fold) const
{
    const auto path = teacher_path(fold);
    if (!fs::exists(path)) {
        throw DataError("teacher checkpoint " + path.string() + " not found; run `gpd pretrain-teacher --out " +
                        root_.string() + " --fold " + std::to_string(fold) + "` first");
    }
    return teacher_from_checkpoint(read_checkpoint(path));
}

// ---------------------------------------------------------------------------
// Commands

void command_generate(const Workspace& ws, const ExperimentConfig& cfg)
{
    std::vector<std::string> files;
    std::vector<TrialRecord> first;
    for (auto m : {Modality::Video, Modality::Audio}) {
        auto ds = generate_dataset(cfg.generator, m);
        const auto path = ws.dataset_path(m);
        fs::create_directories(path.parent_path());
        fs::path tmp = path;
        tmp += ".tmp";
        write_dataset(ds.trials, tmp);
        fs::rename(tmp, path);
        files.push_back(path.filename().string());
        if (first.empty()) {
            first = std::move(ds.trials);
        }
    }
    write_file_atomic(ws.manifest_path(), make_manifest(cfg.generator, first, files).dump(2) + "\n");
    write_file_atomic(ws.config_path(), experiment_config_to_json(cfg).dump(2) + "\n");
}

std::vector<TeacherReport> command_pretrain_teacher(const Workspace& ws, const ExperimentConfig& cfg,
                                                    std::span<const int> folds, std::size_t jobs)
{
    // GSR is identical across modalities; the video file is the reference copy.
    const auto dataset = ws.load_dataset(Modality::Video);
    std::vector<TeacherReport> reports(folds.size());
    run_parallel(folds.size(), jobs, [&](std::size_t i) {
        RunConfig rc = cfg.run;
        rc.fold = folds[i];
        const auto train = pack_trials(select_fold(dataset, rc.fold, false));
        const auto test = pack_trials(select_fold(dataset, rc.fold, true));
        if (test.empty()) {
            throw DataError("fold " + std::to_string(rc.fold) + " has no test subjects");
        }
        auto teacher = pretrain_teacher(train, rc, prefixed_logger("teacher/fold" + std::to_string(rc.fold)));
        const fs::path path = ws.teacher_path(rc.fold);
        fs::create_directories(path.parent_path());
        fs::path tmp = path;
        tmp += ".tmp";
        write_checkpoint(tmp, to_checkpoint(teacher));
        fs::rename(tmp, path);
        reports[i] = {rc.fold, evaluate(predict(teacher, test))};
    });
    std::vector<FoldMetrics> rows;
    for (const auto& r : reports) {
        rows.push_back({r.fold, r.test});
    }
    write_file_atomic(ws.root() / "teachers" / "metrics.csv", metrics_csv(rows));
    return reports;
}

FoldOutcome run_fold(const std::vector<TrialRecord>& dataset, const TeacherNet& teacher, const RunConfig& cfg,
                     const std::optional<fs::path>& dir, const Logger& log)
{
    const auto train = pack_trials(select_fold(dataset, cfg.fold, false));
    const auto test = pack_trials(select_fold(dataset, cfg.fold, true));
    if (train.empty() || test.empty()) {
        throw DataError("fold " + std::to_string(cfg.fold) + " has an empty train or test split");
    }
    auto result = train_student(train, teacher, cfg, log);
    FoldOutcome out;
    out.fold = cfg.fold;
    out.predictions = predict(result.student, test);
    out.report = evaluate(out.predictions);
    out.trace = result.trace;
    if (dir) {
        write_file_atomic(*dir / "training.csv", training_csv(result.losses));
        write_file_atomic(*dir / "route_trace.csv", route_trace_csv(result.trace));
        const std::array<FoldMetrics, 1> row{{{cfg.fold, out.report}}};
        write_file_atomic(*dir / "metrics.csv", metrics_csv(row));
        const std::vector<int> fold_ids(out.predictions.size(), cfg.fold);
        write_file_atomic(*dir / "evidence.csv", evidence_csv(out.predictions, fold_ids));
        fs::path tmp = *dir / "student.ckpt.tmp";
        write_checkpoint(tmp, to_checkpoint(result.student, result.projection, cfg.seed, cfg.epochs));
        fs::rename(tmp, *dir / "student.ckpt");
        write_file_atomic(*dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
    }
    return out;
}

namespace {

struct RunTask {
    RunConfig cfg;
    std::optional<fs::path> dir;
    std::string label;
};

Logger quiet_joint_warning(Logger inner)
{
    return [inner = std::move(inner)](std::string_view message) {
        if (message.find("joint-route entry interval") == std::string_view::npos) {
            inner(message);
        }
    };
}

std::vector<FoldOutcome> run_tasks(const Workspace& ws, const std::vector<TrialRecord>& dataset,
                                   const std::vector<RunTask>& tasks, std::size_t jobs)
{
    std::map<int, TeacherNet> teachers;
    for (const auto& t : tasks) {
        if (!teachers.contains(t.cfg.fold)) {
            teachers.emplace(t.cfg.fold, ws.load_teacher(t.cfg.fold));
        }
    }
    std::vector<FoldOutcome> outcomes(tasks.size());
    run_parallel(tasks.size(), jobs, [&](std::size_t i) {
        const auto& t = tasks[i];
        outcomes[i] = run_fold(dataset, teachers.at(t.cfg.fold), t.cfg, t.dir,
                               quiet_joint_warning(prefixed_logger(t.label)));
    });
    return outcomes;
}

std::vector<FoldMetrics> fold_rows(std::span<const FoldOutcome> outcomes)
{
    std::vector<FoldMetrics> rows;
    for (const auto& o : outcomes) {
        rows.push_back({o.fold, o.report});
    }
    return rows;
}

std::string run_label(Modality m, std::string_view tag, int fold)
{
    return std::string(modality_name(m)) + "/" + std::string(tag) + "/fold" + std::to_string(fold);
}

void warn_joint_interval(const RunConfig& cfg)
{
    if (cfg.modality == Modality::Video && cfg.routing_enabled &&
        cfg.thresholds().shifted(cfg.router.shift).joint_interval_empty()) {
        std::lock_guard lock(log_mutex);
        std::cerr << "warning: video routing thresholds leave the joint-route entry interval empty; "
                     "route 2 is reachable only by initial assignment or single-step moves\n";
    }
}

}  // namespace

std::vector<FoldOutcome> run_folds(const Workspace& ws, const std::vector<TrialRecord>& dataset, RunConfig cfg,
                                   std::span<const int> folds, std::string_view tag, std::size_t jobs)
{
    std::vector<RunTask> tasks;
    for (int fold : folds) {
        RunConfig rc = cfg;
        rc.fold = fold;
        tasks.push_back({rc, ws.run_dir(cfg.modality, tag, fold), run_label(cfg.modality, tag, fold)});
    }
    return run_tasks(ws, dataset, tasks, jobs);
}

MetricsReport aggregate_outcomes(std::span<const FoldOutcome> outcomes)
{
    std::vector<MetricsReport> reports;
    for (const auto& o : outcomes) {
        reports.push_back(o.report);
    }
    return aggregate_folds(reports);
}

std::vector<FoldOutcome> command_train(const Workspace& ws, const ExperimentConfig& cfg, std::span<const int> folds,
                                       std::string_view tag, std::size_t jobs)
{
    const auto dataset = ws.load_dataset(cfg.run.modality);
    warn_joint_interval(cfg.run);
    auto outcomes = run_folds(ws, dataset, cfg.run, folds, tag, jobs);
    const auto rows = fold_rows(outcomes);
    write_file_atomic(ws.root() / "runs" / std::string(modality_name(cfg.run.modality)) / std::string(tag) /
                          "metrics.csv",
                      metrics_csv(rows));
    return outcomes;
}

MetricsReport command_evaluate(const Workspace& ws, const ExperimentConfig& cfg, std::span<const int> folds,
                               std::string_view tag)
{
    const auto dataset = ws.load_dataset(cfg.run.modality);
    std::vector<FoldMetrics> rows;
    std::vector<MetricsReport> reports;
    for (int fold : folds) {
        const auto path = ws.run_dir(cfg.run.modality, tag, fold) / "student.ckpt";
        if (!fs::exists(path)) {
            throw DataError("student checkpoint " + path.string() + " not found; run `gpd train --out " +
                            ws.root().string() + "` first");
        }
        const auto [student, projection] = student_from_checkpoint(read_checkpoint(path));
        const auto test = pack_trials(select_fold(dataset, fold, true));
        const auto report = evaluate(predict(student, test));
        rows.push_back({fold, report});
        reports.push_back(report);
    }
    write_file_atomic(ws.root() / "runs" / std::string(modality_name(cfg.run.modality)) / std::string(tag) /
                          "evaluation.csv",
                      metrics_csv(rows));
    return aggregate_folds(reports);
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<std::string> ablation_label_columns(int table)
{
    switch (table) {
        case 3: return {"method"};
        case 4: return {"schedule"};
        case 5: return {"route"};
        case 6: return {"weighting", "routing"};
    }
    throw ConfigError("unknown ablation table " + std::to_string(table) + "; expected 3, 4, 5 or 6");
}

std::vector<AblationVariant> ablation_grid(int table)
{
    auto variant = [](DistillVariant v) { return [v](RunConfig& c) { c.variant = v; }; };
    auto family = [](ScheduleFamily f) { return [f](RunConfig& c) { c.schedule.family = f; }; };
    auto fixed = [](Route r) {
        return [r](RunConfig& c) {
            c.routing_enabled = false;
            c.fixed_route = r;
        };
    };
    switch (table) {
        case 3:
            return {{{"baseline"}, variant(DistillVariant::None)},
                    {{"w/o logit-kd"}, variant(DistillVariant::NoLogitKd)},
                    {{"w/o feat-kd"}, variant(DistillVariant::NoFeatKd)},
                    {{"w/o prog-wt"}, variant(DistillVariant::NoProgWt)},
                    {{"full"}, variant(DistillVariant::Full)}};
        case 4:
            return {{{"linear"}, family(ScheduleFamily::Linear)},
                    {{"step"}, family(ScheduleFamily::Step)},
                    {{"cosine"}, family(ScheduleFamily::Cosine)},
                    {{"sigmoid"}, family(ScheduleFamily::Sigmoid)}};
        case 5:
            return {{{"No-feat."}, fixed(Route::NoFeature)},
                    {{"Feat.-first"}, fixed(Route::FeatureFirst)},
                    {{"Logit-first"}, fixed(Route::LogitFirst)},
                    {{"Joint"}, fixed(Route::Joint)},
                    {{"Dyn."}, [](RunConfig& c) { c.routing_enabled = true; }}};
        case 6: {
            std::vector<AblationVariant> grid;
            const std::array<std::pair<const char*, ScheduleFamily>, 4> families{{{"Sig.", ScheduleFamily::Sigmoid},
                                                                                   {"Lin.", ScheduleFamily::Linear},
                                                                                   {"Step", ScheduleFamily::Step},
                                                                                   {"Cos.", ScheduleFamily::Cosine}}};
            for (const auto& [name, f] : families) {
                grid.push_back({{name, "On"}, [f](RunConfig& c) {
                                    c.schedule.family = f;
                                    c.routing_enabled = true;
                                }});
                // Off keeps the configured fixed_route.
                grid.push_back({{name, "Off"}, [f](RunConfig& c) {
                                    c.schedule.family = f;
                                    c.routing_enabled = false;
                                }});
            }
            return grid;
        }
    }
    throw ConfigError("unknown ablation table " + std::to_string(table) + "; expected 3, 4, 5 or 6");
}

std::string ablation_csv(const AblationTable& table, std::span<const Modality> modalities)
{
    std::string s;
    for (const auto& c : table.label_columns) {
        s += c + ',';
    }
    for (std::size_t i = 0; i < modalities.size(); ++i) {
        const std::string m(modality_name(modalities[i]));
        s += m + "_top1," + m + "_top2," + m + "_f1," + m + "_auc";
        s += i + 1 < modalities.size() ? "," : "\n";
    }
    for (const auto& row : table.rows) {
        for (const auto& l : row.labels) {
            s += l + ',';
        }
        for (std::size_t i = 0; i < modalities.size(); ++i) {
            const auto& m = row.metrics.at(modalities[i]);
            s += format_double(m.top1) + ',' + format_double(m.top2) + ',' + format_double(m.f1) + ',' +
                 format_double(m.auc);
            s += i + 1 < modalities.size() ? "," : "\n";
        }
    }
    return s;
}

AblationTable command_ablate(const Workspace& ws, const ExperimentConfig& cfg, int table,
                             std::span<const Modality> modalities, std::span<const int> folds, std::size_t jobs)
{
    AblationTable out;
    out.number = table;
    out.label_columns = ablation_label_columns(table);
    const auto grid = ablation_grid(table);
    for (const auto& v : grid) {
        out.rows.push_back({v.labels, {}});
    }
    for (auto m : modalities) {
        const auto dataset = ws.load_dataset(m);
        std::vector<RunTask> tasks;
        for (const auto& v : grid) {
            std::string label;
            for (const auto& l : v.labels) {
                label += (label.empty() ? "" : "-") + slug(l);
            }
            const std::string tag = "table" + std::to_string(table) + "-" + label;
            for (int fold : folds) {
                RunConfig rc = cfg.run;
                rc.modality = m;
                rc.fold = fold;
                v.apply(rc);
                rc.validate();
                tasks.push_back({rc, ws.run_dir(m, tag, fold), run_label(m, tag, fold)});
            }
        }
        RunConfig probe = cfg.run;
        probe.modality = m;
        warn_joint_interval(probe);
        const auto outcomes = run_tasks(ws, dataset, tasks, jobs);
        for (std::size_t r = 0; r < grid.size(); ++r) {
            const std::span<const FoldOutcome> rows(outcomes.data() + r * folds.size(), folds.size());
            out.rows[r].metrics[m] = aggregate_outcomes(rows);
        }
    }
    write_file_atomic(ws.ablation_dir() / ("table" + std::to_string(table) + ".csv"), ablation_csv(out, modalities));
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

SweepParam sweep_param_from_name(std::string_view name)
{
    if (name == "mu") {
        return SweepParam::Mu;
    }
    if (name == "delta") {
        return SweepParam::Delta;
    }
    throw ConfigError("unknown sweep parameter '" + std::string(name) + "'; expected mu or delta");
}

std::string_view sweep_param_name(SweepParam p) noexcept { return p == SweepParam::Mu ? "mu" : "delta"; }

std::vector<double> default_sweep_values(SweepParam p)
{
    if (p == SweepParam::Mu) {
        return {0.0, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9};
    }
    return {-0.06, -0.04, -0.02, 0.0, 0.02, 0.04, 0.06};
}

void validate_sweep_value(SweepParam p, double value, const RunConfig& cfg)
{
    if (p == SweepParam::Mu) {
        if (!(value >= 0.0 && value < 1.0)) {
            throw ConfigError("mu = " + format_double(value) + " outside [0, 1)");
        }
        return;
    }
    for (const auto& t : {cfg.router.video, cfg.router.audio}) {
        try {
            t.shifted(value).validate();
        } catch (const ConfigError& e) {
            throw ConfigError("delta = " + format_double(value) + ": " + e.what());
        }
    }
}

std::string sweep_csv(std::span<const SweepRow> rows)
{
    std::string s = "value,modality,top1,top2,f1,auc\n";
    for (const auto& r : rows) {
        s += format_double(r.value) + ',' + std::string(modality_name(r.modality)) + ',' + format_double(r.metrics.top1) +
             ',' + format_double(r.metrics.top2) + ',' + format_double(r.metrics.f1) + ',' +
             format_double(r.metrics.auc) + '\n';
    }
    return s;
}

std::vector<SweepRow> command_sweep(const Workspace& ws, const ExperimentConfig& cfg, SweepParam param,
                                    std::span<const double> values, std::span<const Modality> modalities,
                                    std::span<const int> folds, std::size_t jobs)
{
    for (double v : values) {
        validate_sweep_value(param, v, cfg.run);
    }
    std::vector<SweepRow> rows;
    const std::string name(sweep_param_name(param));
    for (auto m : modalities) {
        const auto dataset = ws.load_dataset(m);
        std::vector<RunTask> tasks;
        for (double v : values) {
            const std::string tag = "sweep-" + name + "-" + format_double(v);
            for (int fold : folds) {
                RunConfig rc = cfg.run;
                rc.modality = m;
                rc.fold = fold;
                (param == SweepParam::Mu ? rc.router.momentum : rc.router.shift) = v;
                tasks.push_back({rc, ws.run_dir(m, tag, fold), run_label(m, tag, fold)});
            }
        }
        const auto outcomes = run_tasks(ws, dataset, tasks, jobs);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const std::span<const FoldOutcome> block(outcomes.data() + i * folds.size(), folds.size());
            rows.push_back({values[i], m, aggregate_outcomes(block)});
        }
    }
    write_file_atomic(ws.sweep_dir() / (name + ".csv"), sweep_csv(rows));
    return rows;
}

// ---------------------------------------------------------------------------
// Transitions

std::string transitions_csv(const TransitionStats& stats)
{
    std::string s = "category,total,teacher_correct,teacher_wrong,teacher_consistent,teacher_inconsistent\n";
    const std::array<std::pair<const char*, const TransitionCell*>, 4> cells{{{"both_wrong", &stats.both_wrong},
                                                                              {"repaired", &stats.repaired},
                                                                              {"dropped", &stats.dropped},
                                                                              {"both_correct", &stats.both_correct}}};
    for (const auto& [name, c] : cells) {
        s += std::string(name) + ',' + std::to_string(c->total) + ',' + std::to_string(c->teacher_correct) + ',' +
             std::to_string(c->teacher_wrong) + ',' + std::to_string(c->teacher_consistent) + ',' +
             std::to_string(c->teacher_inconsistent) + '\n';
    }
    return s;
}

TransitionStats command_transitions(const Workspace& ws, const ExperimentConfig& cfg, Modality modality,
                                    std::span<const int> folds, std::size_t jobs)
{
    const auto dataset = ws.load_dataset(modality);
    const std::string m(modality_name(modality));
    const fs::path base = ws.transition_dir() / m;
    std::vector<RunTask> tasks;
    for (int fold : folds) {
        for (auto v : {DistillVariant::None, DistillVariant::Full}) {
            RunConfig rc = cfg.run;
            rc.modality = modality;
            rc.fold = fold;
            rc.variant = v;
            const std::string tag = v == DistillVariant::None ? "baseline" : "full";
            tasks.push_back({rc, base / tag / ("fold" + std::to_string(fold)), run_label(modality, tag, fold)});
        }
    }
    const auto outcomes = run_tasks(ws, dataset, tasks, jobs);

    TransitionStats stats;
    std::vector<TrialPrediction> teacher_predictions;
    std::vector<int> teacher_folds;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        const auto teacher = ws.load_teacher(folds[i]);
        const auto test = pack_trials(select_fold(dataset, folds[i], true));
        const auto tp = predict(teacher, test);
        stats += transition_stats(outcomes[2 * i].predictions, outcomes[2 * i + 1].predictions, tp);
        teacher_predictions.insert(teacher_predictions.end(), tp.begin(), tp.end());
        teacher_folds.insert(teacher_folds.end(), tp.size(), folds[i]);
    }
    write_file_atomic(base / "teacher_evidence.csv", evidence_csv(teacher_predictions, teacher_folds));
    write_file_atomic(ws.transition_dir() / (m + ".csv"), transitions_csv(stats));
    return stats;
}

// ---------------------------------------------------------------------------
// CSV input and plots

std::size_t CsvTable::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw DataError("CSV column '" + std::string(name) + "' not found");
}

CsvTable read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        return cells;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": empty CSV");
    }
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " cells");
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

namespace {

double parse_cell(const std::string& s)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw DataError("non-numeric CSV cell '" + s + "'");
    }
    return v;
}

constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0, double y1)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)), x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1),
          y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1)
    {
    }

    void line(const std::vector<std::pair<double, double>>& pts, const char* color, double width = 1.5,
              bool step = false)
    {
        if (pts.empty()) {
            return;
        }
        std::string d = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"" + fmt(width) +
                        "\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (step && i > 0) {
                d += fmt(px(pts[i].first)) + ',' + fmt(py(pts[i - 1].second)) + ' ';
            }
            d += fmt(px(pts[i].first)) + ',' + fmt(py(pts[i].second)) + ' ';
        }
        d += "\"/>\n";
        body_ += d;
    }

    void bar(double x, double w, double h, const char* color)
    {
        body_ += "<rect x=\"" + fmt(px(x)) + "\" y=\"" + fmt(py(h)) + "\" width=\"" + fmt(px(x + w) - px(x)) +
                 "\" height=\"" + fmt(py(y0_) - py(h)) + "\" fill=\"" + color + "\"/>\n";
    }

    void label(double x, double y, const std::string& text, const char* anchor = "middle")
    {
        body_ += "<text x=\"" + fmt(px(x)) + "\" y=\"" + fmt(py(y)) + "\" font-size=\"11\" text-anchor=\"" + anchor +
                 "\">" + text + "</text>\n";
    }

    void legend(std::size_t slot, const std::string& text, const char* color)
    {
        const double y = kTop + 14.0 * static_cast<double>(slot) + 10;
        body_ += "<rect x=\"" + fmt(kWidth - kRight + 8) + "\" y=\"" + fmt(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
                 color + "\"/>\n<text x=\"" + fmt(kWidth - kRight + 22) + "\" y=\"" + fmt(y) +
                 "\" font-size=\"11\">" + text + "</text>\n";
    }

    std::string render() const
    {
        std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
                        fmt(kHeight) + "\" font-family=\"sans-serif\">\n";
        s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">" + title_ +
             "</text>\n";
        s += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(kWidth - kLeft - kRight) +
             "\" height=\"" + fmt(kHeight - kTop - kBottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double fx = x0_ + (x1_ - x0_) * i / 4.0;
            const double fy = y0_ + (y1_ - y0_) * i / 4.0;
            s += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(kHeight - kBottom + 14) +
                 "\" font-size=\"10\" text-anchor=\"middle\">" + tick(fx) + "</text>\n";
            s += "<text x=\"" + fmt(kLeft - 4) + "\" y=\"" + fmt(py(fy) + 3) +
                 "\" font-size=\"10\" text-anchor=\"end\">" + tick(fy) + "</text>\n";
        }
        s += "<text x=\"" + fmt((kLeft + kWidth - kRight) / 2) + "\" y=\"" + fmt(kHeight - 6) +
             "\" font-size=\"12\" text-anchor=\"middle\">" + xlabel_ + "</text>\n";
        s += "<text x=\"14\" y=\"" + fmt((kTop + kHeight - kBottom) / 2) +
             "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
             fmt((kTop + kHeight - kBottom) / 2) + ")\">" + ylabel_ + "</text>\n";
        return s + body_ + "</svg>\n";
    }

private:
    static constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 130, kTop = 30, kBottom = 40;

    static std::string fmt(double v)
    {
        std::array<char, 32> buf{};
        auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, 2);
        (void)ec;
        return std::string(buf.data(), end);
    }
    static std::string tick(double v)
    {
        std::array<char, 32> buf{};
        auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 3);
        (void)ec;
        return std::string(buf.data(), end);
    }
    double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom); }

    std::string title_, xlabel_, ylabel_;
    double x0_, x1_, y0_, y1_;
    std::string body_;
};

std::string route_plot(const CsvTable& t, const std::string& title)
{
    const auto ce = t.column("epoch"), cg = t.column("ema_gap"), cr = t.column("route");
    std::vector<std::pair<double, double>> gap, route;
    double last = 1;
    for (const auto& r : t.rows) {
        const double e = parse_cell(r[ce]);
        gap.emplace_back(e, parse_cell(r[cg]));
        route.emplace_back(e, parse_cell(r[cr]) / 3.0);
        last = e;
    }
    SvgPlot p(title, "epoch", "gap / route÷3", 1, last, 0, 1);
    p.line(route, kPalette[1], 2.0, true);
    p.line(gap, kPalette[0]);
    p.legend(0, "ema gap", kPalette[0]);
    p.legend(1, "route (0-3)", kPalette[1]);
    return p.render();
}

std::string sweep_plot(const CsvTable& t, const std::string& param)
{
    const auto cv = t.column("value"), cm = t.column("modality"), c1 = t.column("top1");
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double x0 = 0, x1 = 0, y1 = 0;
    bool first = true;
    for (const auto& r : t.rows) {
        const double x = parse_cell(r[cv]), y = parse_cell(r[c1]);
        series[r[cm]].emplace_back(x, y);
        x0 = first ? x : std::min(x0, x);
        x1 = first ? x : std::max(x1, x);
        y1 = std::max(y1, y);
        first = false;
    }
    SvgPlot p("Top-1 vs " + param, param, "Top-1", x0, x1, 0, std::max(0.1, y1 * 1.1));
    std::size_t slot = 0;
    for (auto& [name, pts] : series) {
        std::sort(pts.begin(), pts.end());
        p.line(pts, kPalette[slot % kPalette.size()], 2.0);
        p.legend(slot, name, kPalette[slot % kPalette.size()]);
        ++slot;
    }
    return p.render();
}

std::string transition_plot(const CsvTable& t, const std::string& title)
{
    const auto cc = t.column("category"), ct = t.column("total"), cs = t.column("teacher_consistent");
    double ymax = 1;
    for (const auto& r : t.rows) {
        ymax = std::max(ymax, parse_cell(r[ct]));
    }
    SvgPlot p(title, "category", "trials", 0, static_cast<double>(t.rows.size()), 0, ymax * 1.1);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double x = static_cast<double>(i);
        p.bar(x + 0.1, 0.4, parse_cell(t.rows[i][ct]), kPalette[0]);
        p.bar(x + 0.5, 0.4, parse_cell(t.rows[i][cs]), kPalette[2]);
        p.label(x + 0.5, -ymax * 0.0, t.rows[i][cc]);
    }
    p.legend(0, "total", kPalette[0]);
    p.legend(1, "teacher-consistent", kPalette[2]);
    return p.render();
}

std::string evidence_plot(const CsvTable& t, const std::string& title)
{
    std::vector<std::size_t> cols;
    for (std::size_t d = 1; d <= kDigits; ++d) {
        cols.push_back(t.column("e" + std::to_string(d)));
    }
    const auto cd = t.column("d_star");
    double lo = 0, hi = 0;
    bool first = true;
    std::vector<std::vector<std::pair<double, double>>> curves;
    std::vector<int> stars;
    for (const auto& r : t.rows) {
        std::vector<std::pair<double, double>> pts;
        for (std::size_t d = 0; d < kDigits; ++d) {
            const double v = parse_cell(r[cols[d]]);
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
            pts.emplace_back(static_cast<double>(d + 1), v);
        }
        curves.push_back(std::move(pts));
        stars.push_back(static_cast<int>(parse_cell(r[cd])));
    }
    SvgPlot p(title, "digit", "evidence", 1, 10, lo, hi);
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const char* color = kPalette[static_cast<std::size_t>(stars[i] - 1) % kPalette.size()];
        p.line(curves[i], color, 1.0);
    }
    for (std::size_t d = 0; d < kDigits; ++d) {
        p.legend(d, "d* = " + std::to_string(d + 1), kPalette[d]);
    }
    return p.render();
}

std::vector<fs::path> sorted_files(const fs::path& dir, std::string_view name)
{
    std::vector<fs::path> out;
    if (!fs::exists(dir)) {
        return out;
    }
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() == name) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string flatten(const fs::path& rel)
{
    std::string s;
    for (const auto& part : rel) {
        if (!s.empty()) {
            s += '_';
        }
        s += part.string();
    }
    return s;
}

}  // namespace

std::vector<fs::path> command_plot(const Workspace& ws, const Logger& log)
{
    std::vector<fs::path> written;
    auto emit = [&](const fs::path& source, const fs::path& target, auto render) {
        try {
            write_file_atomic(target, render(read_csv(source)));
            written.push_back(target);
        } catch (const std::exception& e) {
            log("skipping plot for " + source.string() + ": " + e.what());
        }
    };

    const fs::path runs = ws.root() / "runs";
    for (const auto& f : sorted_files(runs, "route_trace.csv")) {
        const auto rel = fs::relative(f.parent_path(), runs);
        emit(f, ws.plot_dir() / ("route_" + flatten(rel) + ".svg"),
             [&](const CsvTable& t) { return route_plot(t, rel.generic_string()); });
    }
    for (const auto& f : sorted_files(runs, "evidence.csv")) {
        const auto rel = fs::relative(f.parent_path(), runs);
        emit(f, ws.plot_dir() / ("evidence_" + flatten(rel) + ".svg"),
             [&](const CsvTable& t) { return evidence_plot(t, rel.generic_string()); });
    }
    bool any_sweep = false;
    for (const char* param : {"mu", "delta"}) {
        const fs::path f = ws.sweep_dir() / (std::string(param) + ".csv");
        if (fs::exists(f)) {
            any_sweep = true;
            emit(f, ws.plot_dir() / ("sweep_" + std::string(param) + ".svg"),
                 [&](const CsvTable& t) { return sweep_plot(t, param); });
        }
    }
    if (!any_sweep) {
        log("no sweep CSVs under " + ws.sweep_dir().string() + "; skipping sweep plots");
    }
    bool any_transition = false;
    for (auto m : {Modality::Video, Modality::Audio}) {
        const std::string name(modality_name(m));
        const fs::path f = ws.transition_dir() / (name + ".csv");
        if (fs::exists(f)) {
            any_transition = true;
            emit(f, ws.plot_dir() / ("transitions_" + name + ".svg"),
                 [&](const CsvTable& t) { return transition_plot(t, "transitions (" + name + ")"); });
        }
    }
    if (!any_transition) {
        log("no transition CSVs under " + ws.transition_dir().string() + "; skipping transition plots");
    }
    if (written.empty() && !fs::exists(runs)) {
        log("no run artifacts under " + runs.string());
    }
    return written;
}

}  // namespace gpd
