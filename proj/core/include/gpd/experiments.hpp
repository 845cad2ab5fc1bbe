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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpd/data.hpp"
#include "gpd/engine.hpp"

namespace gpd {

/// Generator and run settings in one JSON document:
///   {"generator": {...}, "run": {...}}
struct ExperimentConfig {
    GeneratorConfig generator;
    RunConfig run;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
/// Throws ConfigError on unknown keys or invalid values.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});

/// Applies "a.b.c=value" to @p doc. The value is parsed as JSON when possible
/// and taken as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Built-in defaults, then the config file, then the overrides in order.
ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        std::span<const std::string> overrides);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string training_csv(std::span<const EpochLosses> losses);
std::string route_trace_csv(std::span<const EpochTrace> trace);
std::string evidence_csv(std::span<const TrialPrediction> predictions, std::span<const int> folds);

struct FoldMetrics {
    int fold = 0;
    MetricsReport report;
};
/// One row per fold plus an "all" row holding the sample-weighted aggregate.
std::string metrics_csv(std::span<const FoldMetrics> folds);

/// Runs @p count independent tasks on up to @p jobs threads. Exceptions are
/// rethrown in task order after all tasks finish.
void run_parallel(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

/// Directory layout under the --out root.
class Workspace {
public:
    explicit Workspace(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path config_path() const { return root_ / "config.json"; }
    std::filesystem::path dataset_path(Modality m) const;
    std::filesystem::path manifest_path() const { return root_ / "data" / "manifest.json"; }
    std::filesystem::path teacher_path(int fold) const;
    std::filesystem::path run_dir(Modality m, std::string_view tag, int fold) const;
    std::filesystem::path ablation_dir() const { return root_ / "ablations"; }
    std::filesystem::path sweep_dir() const { return root_ / "sweeps"; }
    std::filesystem::path transition_dir() const { return root_ / "transitions"; }
    std::filesystem::path plot_dir() const { return root_ / "plots"; }

    /// Throws DataError naming the `generate` command when absent.
    std::vector<TrialRecord> load_dataset(Modality m) const;
    /// Throws DataError naming the `pretrain-teacher` command when absent.
    TeacherNet load_teacher(int fold) const;

private:
    std::filesystem::path root_;
};

/// generate: both modalities, manifest and a config snapshot.
void command_generate(const Workspace& ws, const ExperimentConfig& cfg);

struct TeacherReport {
    int fold = 0;
    MetricsReport test;
};
/// pretrain-teacher for the listed folds. Teachers see only GSR, which does
/// not depend on the modality, so one checkpoint per fold serves both.
std::vector<TeacherReport> command_pretrain_teacher(const Workspace& ws, const ExperimentConfig& cfg,
                                                    std::span<const int> folds, std::size_t jobs);

struct FoldOutcome {
    int fold = 0;
    MetricsReport report;
    std::vector<TrialPrediction> predictions;
    std::vector<EpochTrace> trace;
};

/// Trains and evaluates one student on one fold against a frozen teacher.
/// When @p dir is set, writes training.csv, route_trace.csv, metrics.csv,
/// evidence.csv and student.ckpt there.
FoldOutcome run_fold(const std::vector<TrialRecord>& dataset, const TeacherNet& teacher, const RunConfig& cfg,
                     const std::optional<std::filesystem::path>& dir, const Logger& log = stderr_logger);

/// Runs every fold of @p folds and returns outcomes in fold order.
std::vector<FoldOutcome> run_folds(const Workspace& ws, const std::vector<TrialRecord>& dataset, RunConfig cfg,
                                   std::span<const int> folds, std::string_view tag, std::size_t jobs);

MetricsReport aggregate_outcomes(std::span<const FoldOutcome> outcomes);

/// train: writes runs/<modality>/<tag>/fold<k>/ and runs/<modality>/<tag>/metrics.csv.
std::vector<FoldOutcome> command_train(const Workspace& ws, const ExperimentConfig& cfg, std::span<const int> folds,
                                       std::string_view tag, std::size_t jobs);

/// evaluate: reloads student checkpoints written by train and recomputes metrics.
MetricsReport command_evaluate(const Workspace& ws, const ExperimentConfig& cfg, std::span<const int> folds,
                               std::string_view tag);

struct AblationRow {
    std::vector<std::string> labels;  ///< leading label columns
    std::map<Modality, MetricsReport> metrics;
};

struct AblationTable {
    int number = 0;
    std::vector<std::string> label_columns;
    std::vector<AblationRow> rows;
};

/// Label columns and row variants of an ablation grid (tables 3 to 6).
struct AblationVariant {
    std::vector<std::string> labels;
    std::function<void(RunConfig&)> apply;
};
std::vector<std::string> ablation_label_columns(int table);
std::vector<AblationVariant> ablation_grid(int table);

std::string ablation_csv(const AblationTable& table, std::span<const Modality> modalities);

AblationTable command_ablate(const Workspace& ws, const ExperimentConfig& cfg, int table,
                             std::span<const Modality> modalities, std::span<const int> folds, std::size_t jobs);

enum class SweepParam { Mu, Delta };
SweepParam sweep_param_from_name(std::string_view name);
std::string_view sweep_param_name(SweepParam p) noexcept;
std::vector<double> default_sweep_values(SweepParam p);
/// Throws ConfigError for μ outside [0, 1) or Δ moving a threshold out of [0, 1].
void validate_sweep_value(SweepParam p, double value, const RunConfig& cfg);

struct SweepRow {
    double value = 0.0;
    Modality modality = Modality::Video;
    MetricsReport metrics;
};
std::string sweep_csv(std::span<const SweepRow> rows);

std::vector<SweepRow> command_sweep(const Workspace& ws, const ExperimentConfig& cfg, SweepParam param,
                                    std::span<const double> values, std::span<const Modality> modalities,
                                    std::span<const int> folds, std::size_t jobs);

std::string transitions_csv(const TransitionStats& stats);

/// Trains baseline and full students on every fold, compares them with the
/// teacher and writes transitions/<modality>.csv plus per-trial evidence.
TransitionStats command_transitions(const Workspace& ws, const ExperimentConfig& cfg, Modality modality,
                                    std::span<const int> folds, std::size_t jobs);

/// Renders SVG plots for whatever CSVs exist; missing inputs are skipped with
/// a warning. Returns the files written.
std::vector<std::filesystem::path> command_plot(const Workspace& ws, const Logger& log = stderr_logger);

/// Minimal CSV reader for plot inputs: header plus rows of raw cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace gpd
