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


// gpd: data generation, teacher pretraining, student training, evaluation,
// ablation grids, sensitivity sweeps, transition statistics and plots.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gpd/errors.hpp"
#include "gpd/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct GlobalOptions {
    std::string config;
    std::string out = "gpd_out";
    std::optional<std::uint64_t> seed;
    std::string modality;
    std::optional<int> fold;
    std::size_t jobs = 1;
    std::vector<std::string> overrides;
};

gpd::ExperimentConfig resolve_config(const GlobalOptions& g)
{
    std::optional<std::filesystem::path> file;
    if (!g.config.empty()) {
        file = g.config;
    }
    auto cfg = gpd::load_experiment_config(file, g.overrides);
    if (g.seed) {
        cfg.run.seed = *g.seed;
        cfg.generator.seed = *g.seed;
    }
    if (!g.modality.empty() && g.modality != "both") {
        cfg.run.modality = gpd::modality_from_name(g.modality);
    }
    if (g.fold) {
        cfg.run.fold = *g.fold;
    }
    if (g.jobs < 1) {
        throw gpd::ConfigError("--jobs must be >= 1");
    }
    return cfg;
}

/// Fold count recorded by generate, falling back to the configuration.
std::size_t fold_count(const gpd::Workspace& ws, const gpd::ExperimentConfig& cfg)
{
    std::ifstream in(ws.manifest_path());
    if (in) {
        try {
            return nlohmann::json::parse(in).at("folds").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw gpd::DataError(ws.manifest_path().string() + ": " + e.what());
        }
    }
    return cfg.generator.folds;
}

std::vector<int> selected_folds(const GlobalOptions& g, const gpd::Workspace& ws, const gpd::ExperimentConfig& cfg)
{
    const auto k = fold_count(ws, cfg);
    if (g.fold) {
        if (*g.fold < 0 || static_cast<std::size_t>(*g.fold) >= k) {
            throw gpd::ConfigError("--fold " + std::to_string(*g.fold) + " out of range for " + std::to_string(k) +
                                   " folds");
        }
        return {*g.fold};
    }
    std::vector<int> folds;
    for (std::size_t i = 0; i < k; ++i) {
        folds.push_back(static_cast<int>(i));
    }
    return folds;
}

std::vector<gpd::Modality> selected_modalities(const GlobalOptions& g)
{
    if (g.modality.empty() || g.modality == "both") {
        return {gpd::Modality::Video, gpd::Modality::Audio};
    }
    return {gpd::modality_from_name(g.modality)};
}

void print_metrics(const std::string& label, const gpd::MetricsReport& m)
{
    std::cout << label << ": top1=" << gpd::format_double(m.top1) << " top2=" << gpd::format_double(m.top2)
              << " f1=" << gpd::format_double(m.f1) << " auc=" << gpd::format_double(m.auc) << " (" << m.n_trials
              << " trials)\n";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"GSR-guided progressive distillation experiments"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config, "JSON config with \"generator\" and \"run\" sections")
        ->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "workspace directory")->capture_default_str();
    app.add_option("--seed", g.seed, "seed for both the generator and training");
    app.add_option("--modality", g.modality, "video, audio or both")
        ->check(CLI::IsMember({"video", "audio", "both"}));
    app.add_option("--fold", g.fold, "restrict to one fold");
    app.add_option("--jobs", g.jobs, "parallel runs")->capture_default_str();
    app.add_option("--set", g.overrides, "override a config value, e.g. run.epochs=40")->take_all();

    auto* generate = app.add_subcommand("generate", "write synthetic datasets for both modalities");
    auto* pretrain = app.add_subcommand("pretrain-teacher", "train and freeze the GSR teacher per fold");
    auto* train = app.add_subcommand("train", "train students on the selected folds");
    std::string tag = "gpd";
    train->add_option("--tag", tag, "run name under runs/<modality>/")->capture_default_str();
    auto* evaluate = app.add_subcommand("evaluate", "re-evaluate saved student checkpoints");
    evaluate->add_option("--tag", tag, "run name under runs/<modality>/")->capture_default_str();
    auto* ablate = app.add_subcommand("ablate", "run an ablation grid");
    int table = 0;
    ablate->add_option("--table", table, "ablation table")->required()->check(CLI::IsMember({3, 4, 5, 6}));
    auto* sweep = app.add_subcommand("sweep", "sensitivity sweep over mu or delta");
    std::string param;
    std::vector<double> values;
    sweep->add_option("--param", param, "mu or delta")->required()->check(CLI::IsMember({"mu", "delta"}));
    sweep->add_option("--values", values, "comma-separated values")->delimiter(',');
    auto* transitions = app.add_subcommand("transitions", "baseline vs distilled transition statistics");
    auto* plot = app.add_subcommand("plot", "render SVG plots from existing CSVs");
    for (auto* sub : {generate, pretrain, train, evaluate, ablate, sweep, transitions, plot}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        const auto cfg = resolve_config(g);
        const gpd::Workspace ws(g.out);
        if (*generate) {
            gpd::command_generate(ws, cfg);
            std::cout << "wrote " << ws.dataset_path(gpd::Modality::Video).string() << " and "
                      << ws.dataset_path(gpd::Modality::Audio).string() << '\n';
        } else if (*pretrain) {
            for (const auto& r : gpd::command_pretrain_teacher(ws, cfg, selected_folds(g, ws, cfg), g.jobs)) {
                print_metrics("teacher fold" + std::to_string(r.fold), r.test);
            }
        } else if (*train) {
            const auto outcomes = gpd::command_train(ws, cfg, selected_folds(g, ws, cfg), tag, g.jobs);
            for (const auto& o : outcomes) {
                print_metrics(std::string(gpd::modality_name(cfg.run.modality)) + " fold" + std::to_string(o.fold),
                              o.report);
            }
            print_metrics("aggregate", gpd::aggregate_outcomes(outcomes));
        } else if (*evaluate) {
            print_metrics("aggregate", gpd::command_evaluate(ws, cfg, selected_folds(g, ws, cfg), tag));
        } else if (*ablate) {
            const auto modalities = selected_modalities(g);
            const auto t = gpd::command_ablate(ws, cfg, table, modalities, selected_folds(g, ws, cfg), g.jobs);
            std::cout << gpd::ablation_csv(t, modalities);
        } else if (*sweep) {
            const auto p = gpd::sweep_param_from_name(param);
            if (values.empty()) {
                values = gpd::default_sweep_values(p);
            }
            const auto rows =
                gpd::command_sweep(ws, cfg, p, values, selected_modalities(g), selected_folds(g, ws, cfg), g.jobs);
            std::cout << gpd::sweep_csv(rows);
        } else if (*transitions) {
            for (auto m : selected_modalities(g)) {
                const auto stats = gpd::command_transitions(ws, cfg, m, selected_folds(g, ws, cfg), g.jobs);
                std::cout << gpd::modality_name(m) << '\n' << gpd::transitions_csv(stats);
            }
        } else if (*plot) {
            for (const auto& f : gpd::command_plot(ws)) {
                std::cout << "wrote " << f.string() << '\n';
            }
        }
    } catch (const gpd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const gpd::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const gpd::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kOk;
}
