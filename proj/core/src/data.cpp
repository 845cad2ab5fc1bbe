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


#include "gpd/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "gpd/errors.hpp"
#include "gpd/json_util.hpp"
#include "gpd/numerics.hpp"

namespace gpd {

namespace {

constexpr double kCutoffHz = 2.0;
constexpr std::size_t kTaps = 385;
constexpr double kBumpCenter = 160.0;
constexpr double kBumpWidth = 128.0;

enum : std::uint64_t {
    kStreamFolds = 0x10,
    kStreamSubject = 0x1000,
    kStreamGsr = 0x2000000,
    kStreamEmbedding = 0x3000000,
    kStreamStudent = 0x4000000,
};

std::uint64_t modality_tag(Modality m) { return m == Modality::Video ? 1 : 2; }

std::vector<double> make_taps()
{
    std::vector<double> h(kTaps);
    const double fc = kCutoffHz / static_cast<double>(kRawRate);
    const double mid = static_cast<double>(kTaps - 1) / 2.0;
    for (std::size_t i = 0; i < kTaps; ++i) {
        const double n = static_cast<double>(i) - mid;
        const double sinc = n == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(kTaps - 1);
        const double blackman = 0.42 - 0.5 * std::cos(phase) + 0.08 * std::cos(2.0 * phase);
        h[i] = sinc * blackman;
    }
    const double sum = std::accumulate(h.begin(), h.end(), 0.0);
    for (double& v : h) {
        v /= sum;
    }
    return h;
}

nlohmann::ordered_json segment_to_json(const TrialRecord& trial, const QuestionSegment& seg)
{
    nlohmann::ordered_json j;
    j["subject_id"] = trial.subject_id;
    j["fold"] = trial.fold;
    j["round"] = seg.round;
    j["position"] = seg.position;
    j["digit"] = seg.digit;
    j["label"] = seg.label;
    j["d_star"] = trial.d_star;
    j["modality"] = modality_name(trial.modality);
    j["gsr"] = seg.gsr;
    j["student_feat"] = seg.student_feat;
    return j;
}

}  // namespace

std::string_view modality_name(Modality m) noexcept { return m == Modality::Video ? "video" : "audio"; }

Modality modality_from_name(std::string_view name)
{
    if (name == "video") {
        return Modality::Video;
    }
    if (name == "audio") {
        return Modality::Audio;
    }
    throw ConfigError("unknown modality '" + std::string(name) + "' (expected video or audio)");
}

void validate_trial(const TrialRecord& trial)
{
    const auto fail = [&](const std::string& what) {
        throw ProtocolError("subject " + trial.subject_id + ": " + what);
    };
    if (trial.d_star < 1 || trial.d_star > 10) {
        fail("concealed digit outside 1..10");
    }
    if (trial.segments.size() != 20) {
        fail("has " + std::to_string(trial.segments.size()) + " segments, expected 20");
    }
    int positives = 0;
    for (int round = 1; round <= 2; ++round) {
        std::array<int, 10> digits{};
        std::array<int, 10> positions{};
        for (const auto& seg : trial.segments) {
            if (seg.round != round) {
                continue;
            }
            if (seg.digit < 1 || seg.digit > 10 || seg.position < 1 || seg.position > 10) {
                fail("segment digit or position outside 1..10");
            }
            digits[static_cast<std::size_t>(seg.digit - 1)] += 1;
            positions[static_cast<std::size_t>(seg.position - 1)] += 1;
        }
        for (std::size_t i = 0; i < 10; ++i) {
            if (digits[i] != 1 || positions[i] != 1) {
                fail("round " + std::to_string(round) + " is not a permutation of digits 1..10");
            }
        }
    }
    for (const auto& seg : trial.segments) {
        if (seg.round != 1 && seg.round != 2) {
            fail("segment round must be 1 or 2");
        }
        if (seg.label != (seg.digit == trial.d_star ? 1 : 0)) {
            fail("label disagrees with concealed digit on digit " + std::to_string(seg.digit));
        }
        positives += seg.label;
        if (seg.gsr.size() != kGsrLength) {
            fail("gsr length " + std::to_string(seg.gsr.size()) + ", expected 448");
        }
        if (seg.student_feat.size() != kStudentFeatureLength) {
            fail("student_feat length " + std::to_string(seg.student_feat.size()) + ", expected 768");
        }
        const auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(seg.gsr.begin(), seg.gsr.end(), finite) ||
            !std::all_of(seg.student_feat.begin(), seg.student_feat.end(), finite)) {
            fail("non-finite signal value");
        }
    }
    if (positives != 2) {
        fail("has " + std::to_string(positives) + " positive labels, expected 2");
    }
}

void GeneratorConfig::validate() const
{
    if (n_subjects < folds || folds < 2) {
        throw ConfigError("generator needs n_subjects >= folds >= 2");
    }
    if (!(teacher_noise >= 0.0 && student_noise >= 0.0 && subject_variability >= 0.0 && nuisance_scale >= 0.0)) {
        throw ConfigError("generator noise levels must be >= 0");
    }
    if (!std::isfinite(effect_size)) {
        throw ConfigError("generator effect_size must be finite");
    }
}

const std::vector<double>& gsr_lowpass_taps()
{
    static const std::vector<double> taps = make_taps();
    return taps;
}

std::vector<double> preprocess_gsr(std::span<const double> raw)
{
    if (raw.empty()) {
        throw DataError("preprocess_gsr: empty input");
    }
    const auto& h = gsr_lowpass_taps();
    const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
    const auto n = static_cast<std::ptrdiff_t>(raw.size());
    std::vector<double> out(kGsrLength, 0.0);
    const std::size_t decimated = (raw.size() + kDecimation - 1) / kDecimation;
    const std::size_t kept = std::min(decimated, kGsrLength);
    for (std::size_t k = 0; k < kept; ++k) {
        const auto center = static_cast<std::ptrdiff_t>(k * kDecimation);
        double acc = 0.0;
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(h.size()); ++j) {
            const std::ptrdiff_t idx = std::clamp<std::ptrdiff_t>(center + j - half, 0, n - 1);
            acc += h[static_cast<std::size_t>(j)] * raw[static_cast<std::size_t>(idx)];
        }
        out[k] = acc;
    }
    return out;
}

double response_bump(std::size_t sample) noexcept
{
    const double offset = static_cast<double>(sample) - kBumpCenter;
    const double half_width = kBumpWidth / 2.0;
    if (std::abs(offset) > half_width) {
        return 0.0;
    }
    return 0.5 * (1.0 + std::cos(std::numbers::pi * offset / half_width));
}

std::vector<int> split_folds(std::size_t n_subjects, std::size_t k, std::uint64_t seed)
{
    if (k == 0 || n_subjects < k) {
        throw DataError("split_folds: " + std::to_string(n_subjects) + " subjects cannot fill " + std::to_string(k) +
                        " folds");
    }
    std::vector<std::size_t> order(n_subjects);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, kStreamFolds));
    rng.shuffle(order.begin(), order.end());
    std::vector<int> fold(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        fold[order[i]] = static_cast<int>(i % k);
    }
    return fold;
}

GeneratedDataset generate_dataset(const GeneratorConfig& cfg, Modality modality)
{
    cfg.validate();
    const std::size_t latent_dim = 1 + cfg.nuisance_dim;

    // Fixed embedding of (u, nuisance) into the student feature space; rows have unit norm in expectation.
    Rng embed_rng(derive_seed(cfg.seed, kStreamEmbedding + modality_tag(modality)));
    Matrix embedding(latent_dim, kStudentFeatureLength);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kStudentFeatureLength));
    for (double& v : embedding.values()) {
        v = embed_rng.normal() * scale;
    }

    const auto folds = split_folds(cfg.n_subjects, cfg.folds, cfg.seed);
    GeneratedDataset out;
    out.trials.reserve(cfg.n_subjects);
    for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
        Rng rng(derive_seed(cfg.seed, kStreamSubject + s));
        Rng gsr_rng(derive_seed(cfg.seed, kStreamGsr + s));
        Rng student_rng(derive_seed(cfg.seed, kStreamStudent + s * 4 + modality_tag(modality)));

        char id[16];
        std::snprintf(id, sizeof(id), "S%04zu", s + 1);
        TrialRecord trial;
        trial.subject_id = id;
        trial.d_star = 1 + static_cast<int>(rng.index(10));
        trial.fold = folds[s];
        trial.modality = modality;
        const double offset = cfg.subject_variability * rng.normal();

        GeneratedLatents latents{trial.subject_id, {}};
        for (int round = 1; round <= 2; ++round) {
            std::array<int, 10> order{};
            std::iota(order.begin(), order.end(), 1);
            rng.shuffle(order.begin(), order.end());
            for (int pos = 1; pos <= 10; ++pos) {
                QuestionSegment seg;
                seg.round = round;
                seg.position = pos;
                seg.digit = order[static_cast<std::size_t>(pos - 1)];
                seg.label = seg.digit == trial.d_star ? 1 : 0;
                const double u = cfg.effect_size * seg.label + offset + rng.normal();
                latents.response.push_back(u);

                if (cfg.raw_gsr) {
                    std::vector<double> raw(kGsrLength * kDecimation);
                    for (std::size_t t = 0; t < raw.size(); ++t) {
                        const double pos32 = static_cast<double>(t) / static_cast<double>(kDecimation);
                        const auto lo = static_cast<std::size_t>(pos32);
                        const double frac = pos32 - static_cast<double>(lo);
                        const double bump = (1.0 - frac) * response_bump(lo) + frac * response_bump(lo + 1);
                        raw[t] = u * bump + cfg.teacher_noise * gsr_rng.normal();
                    }
                    seg.gsr = preprocess_gsr(raw);
                } else {
                    seg.gsr.resize(kGsrLength);
                    for (std::size_t t = 0; t < kGsrLength; ++t) {
                        seg.gsr[t] = u * response_bump(t) + cfg.teacher_noise * gsr_rng.normal();
                    }
                }

                std::vector<double> latent(latent_dim);
                latent[0] = u;
                for (std::size_t k = 1; k < latent_dim; ++k) {
                    latent[k] = cfg.nuisance_scale * student_rng.normal();
                }
                seg.student_feat.assign(kStudentFeatureLength, 0.0);
                for (std::size_t k = 0; k < latent_dim; ++k) {
                    auto row = embedding.row(k);
                    for (std::size_t f = 0; f < kStudentFeatureLength; ++f) {
                        seg.student_feat[f] += latent[k] * row[f];
                    }
                }
                for (double& v : seg.student_feat) {
                    v += cfg.student_noise * student_rng.normal();
                }
                trial.segments.push_back(std::move(seg));
            }
        }
        validate_trial(trial);
        out.trials.push_back(std::move(trial));
        out.latents.push_back(std::move(latents));
    }
    return out;
}

void write_dataset(const std::vector<TrialRecord>& trials, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw DataError("cannot write dataset " + path.string());
    }
    for (const auto& trial : trials) {
        for (const auto& seg : trial.segments) {
            os << segment_to_json(trial, seg).dump() << '\n';
        }
    }
    if (!os) {
        throw DataError("failed writing dataset " + path.string());
    }
}

std::vector<TrialRecord> read_dataset(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open dataset " + path.string());
    }
    std::vector<TrialRecord> trials;
    std::map<std::string, std::size_t> index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto where = path.filename().string() + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": malformed record (" + e.what() + ")");
        }
        TrialRecord head;
        QuestionSegment seg;
        try {
            head.subject_id = j.at("subject_id").get<std::string>();
            head.fold = j.at("fold").get<int>();
            head.d_star = j.at("d_star").get<int>();
            head.modality = modality_from_name(j.at("modality").get<std::string>());
            seg.round = j.at("round").get<int>();
            seg.position = j.at("position").get<int>();
            seg.digit = j.at("digit").get<int>();
            seg.label = j.at("label").get<int>();
            seg.gsr = j.at("gsr").get<std::vector<double>>();
            seg.student_feat = j.at("student_feat").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": malformed record (" + e.what() + ")");
        } catch (const ConfigError& e) {
            throw DataError(where + ": " + e.what());
        }
        auto [it, inserted] = index.try_emplace(head.subject_id, trials.size());
        if (inserted) {
            trials.push_back(std::move(head));
        } else {
            const auto& t = trials[it->second];
            if (t.d_star != head.d_star || t.fold != head.fold || t.modality != head.modality) {
                throw ProtocolError(where + ": subject " + head.subject_id + " has inconsistent trial fields");
            }
        }
        trials[it->second].segments.push_back(std::move(seg));
    }
    if (is.bad()) {
        throw DataError("read error on " + path.string());
    }
    for (auto& trial : trials) {
        std::stable_sort(trial.segments.begin(), trial.segments.end(), [](const auto& a, const auto& b) {
            return std::pair(a.round, a.position) < std::pair(b.round, b.position);
        });
        validate_trial(trial);
    }
    return trials;
}

nlohmann::json generator_config_to_json(const GeneratorConfig& cfg)
{
    return {{"n_subjects", cfg.n_subjects},
            {"effect_size", cfg.effect_size},
            {"teacher_noise", cfg.teacher_noise},
            {"student_noise", cfg.student_noise},
            {"nuisance_dim", cfg.nuisance_dim},
            {"subject_variability", cfg.subject_variability},
            {"nuisance_scale", cfg.nuisance_scale},
            {"seed", cfg.seed},
            {"folds", cfg.folds},
            {"raw_gsr", cfg.raw_gsr}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig cfg)
{
    using namespace json_util;
    constexpr std::string_view where = "generator";
    require_known_keys(j,
                       {"n_subjects", "effect_size", "teacher_noise", "student_noise", "nuisance_dim",
                        "subject_variability", "nuisance_scale", "seed", "folds", "raw_gsr"},
                       where);
    read_field(j, "n_subjects", cfg.n_subjects, where);
    read_field(j, "effect_size", cfg.effect_size, where);
    read_field(j, "teacher_noise", cfg.teacher_noise, where);
    read_field(j, "student_noise", cfg.student_noise, where);
    read_field(j, "nuisance_dim", cfg.nuisance_dim, where);
    read_field(j, "subject_variability", cfg.subject_variability, where);
    read_field(j, "nuisance_scale", cfg.nuisance_scale, where);
    read_field(j, "seed", cfg.seed, where);
    read_field(j, "folds", cfg.folds, where);
    read_field(j, "raw_gsr", cfg.raw_gsr, where);
    cfg.validate();
    return cfg;
}

nlohmann::json make_manifest(const GeneratorConfig& cfg, const std::vector<TrialRecord>& trials,
                             const std::vector<std::string>& files)
{
    nlohmann::json fold_map = nlohmann::json::object();
    for (const auto& t : trials) {
        fold_map[t.subject_id] = t.fold;
    }
    return {{"generator", generator_config_to_json(cfg)},
            {"seed", cfg.seed},
            {"folds", cfg.folds},
            {"fold_map", fold_map},
            {"files", files}};
}

std::vector<TrialRecord> select_fold(const std::vector<TrialRecord>& trials, int fold, bool test)
{
    std::vector<TrialRecord> out;
    for (const auto& t : trials) {
        if ((t.fold == fold) == test) {
            out.push_back(t);
        }
    }
    return out;
}

}  // namespace gpd
