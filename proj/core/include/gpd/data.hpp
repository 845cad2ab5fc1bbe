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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace gpd {

enum class Modality { Video, Audio };

std::string_view modality_name(Modality m) noexcept;
Modality modality_from_name(std::string_view name);

inline constexpr std::size_t kGsrLength = 448;
inline constexpr std::size_t kStudentFeatureLength = 768;
inline constexpr std::size_t kRawRate = 256;
inline constexpr std::size_t kDecimation = 8;

struct QuestionSegment {
    int round = 1;     ///< 1 or 2
    int position = 1;  ///< 1..10 within the round
    int digit = 1;     ///< 1..10
    int label = 0;     ///< 1 iff digit == d_star
    std::vector<double> gsr;
    std::vector<double> student_feat;

    bool operator==(const QuestionSegment&) const = default;
};

struct TrialRecord {
    std::string subject_id;
    int d_star = 1;
    int fold = 0;
    Modality modality = Modality::Video;
    std::vector<QuestionSegment> segments;  ///< ordered by (round, position)

    bool operator==(const TrialRecord&) const = default;
};

/// Throws ProtocolError naming the violated invariant.
void validate_trial(const TrialRecord& trial);

struct GeneratorConfig {
    std::size_t n_subjects = 60;
    double effect_size = 1.5;          ///< δ
    double teacher_noise = 0.05;       ///< σ_T, per GSR sample
    double student_noise = 1.0;        ///< σ_S, per student feature after embedding
    std::size_t nuisance_dim = 16;
    double subject_variability = 0.5;  ///< sd of the per-subject response offset
    double nuisance_scale = 2.0;       ///< sd of the nuisance latents
    std::uint64_t seed = 42;
    std::size_t folds = 5;
    bool raw_gsr = false;              ///< synthesize 256 Hz GSR and run preprocess_gsr

    void validate() const;
};

/// Low-pass at 2 Hz (windowed-sinc FIR, edge-replicated), decimate 256 Hz -> 32 Hz,
/// then truncate or zero-pad to 448 samples.
std::vector<double> preprocess_gsr(std::span<const double> raw);

/// FIR taps used by preprocess_gsr (odd length, unit DC gain).
const std::vector<double>& gsr_lowpass_taps();

/// Raised-cosine response template over the 448-sample window.
double response_bump(std::size_t sample) noexcept;

/// Per-subject internal quantities the generator used; exposed for oracle tests.
struct GeneratedLatents {
    std::string subject_id;
    std::vector<double> response;  ///< u_q per segment, in segment order
};

struct GeneratedDataset {
    std::vector<TrialRecord> trials;
    std::vector<GeneratedLatents> latents;
};

/// Deterministic in (cfg, modality). Teacher signals and latents do not depend on
/// the modality; only the student embedding and its noise do.
GeneratedDataset generate_dataset(const GeneratorConfig& cfg, Modality modality);

/// Subject-disjoint fold assignment from a seeded shuffle; sizes differ by at most 1.
std::vector<int> split_folds(std::size_t n_subjects, std::size_t k, std::uint64_t seed);

void write_dataset(const std::vector<TrialRecord>& trials, const std::filesystem::path& path);
/// Throws DataError naming the offending line, ProtocolError on invariant violations.
std::vector<TrialRecord> read_dataset(const std::filesystem::path& path);

nlohmann::json generator_config_to_json(const GeneratorConfig& cfg);
/// Throws ConfigError on unknown keys or wrong types.
GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig base = {});

nlohmann::json make_manifest(const GeneratorConfig& cfg, const std::vector<TrialRecord>& trials,
                             const std::vector<std::string>& files);

/// Trials whose fold equals (test) / differs from (train) @p fold.
std::vector<TrialRecord> select_fold(const std::vector<TrialRecord>& trials, int fold, bool test);

}  // namespace gpd
