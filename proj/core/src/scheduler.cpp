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


#include "gpd/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gpd/errors.hpp"
#include "gpd/numerics.hpp"

namespace gpd {

std::string_view family_name(ScheduleFamily f) noexcept
{
    switch (f) {
        case ScheduleFamily::Sigmoid: return "sigmoid";
        case ScheduleFamily::Linear: return "linear";
        case ScheduleFamily::Step: return "step";
        case ScheduleFamily::Cosine: return "cosine";
    }
    return "unknown";
}

ScheduleFamily family_from_name(std::string_view name)
{
    for (auto f : {ScheduleFamily::Sigmoid, ScheduleFamily::Linear, ScheduleFamily::Step, ScheduleFamily::Cosine}) {
        if (family_name(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown schedule family '" + std::string(name) + "'");
}

void ScheduleConfig::validate() const
{
    if (!(tau_logit > 0.0 && tau_feature > 0.0)) {
        throw ConfigError("schedule smoothness tau must be > 0");
    }
    if (!(ramp_length > 0.0)) {
        throw ConfigError("schedule ramp_length must be > 0");
    }
    if (!(gap_low < gap_high)) {
        throw ConfigError("schedule requires gap_low < gap_high");
    }
    for (const auto& o : onsets) {
        if (!(o.logit >= 0.0 && o.feature >= 0.0)) {
            throw ConfigError("schedule onsets must be >= 0");
        }
    }
}

double alpha_gap(double gap, double gap_low, double gap_high)
{
    if (!(gap_low < gap_high)) {
        throw ConfigError("alpha_gap requires gap_low < gap_high");
    }
    if (gap <= gap_low) {
        return 1.0;
    }
    if (gap >= gap_high) {
        return 0.0;
    }
    return (gap_high - gap) / (gap_high - gap_low);
}

double ramp(ScheduleFamily family, double epoch, double onset, double smoothness, double ramp_length)
{
    switch (family) {
        case ScheduleFamily::Sigmoid:
            return sigmoid((epoch - onset) / smoothness);
        case ScheduleFamily::Linear:
            return std::clamp((epoch - onset) / ramp_length, 0.0, 1.0);
        case ScheduleFamily::Step:
            return epoch >= onset ? 1.0 : 0.0;
        case ScheduleFamily::Cosine: {
            double progress = std::clamp((epoch - onset) / ramp_length, 0.0, 1.0);
            return 0.5 * (1.0 - std::cos(std::numbers::pi * progress));
        }
    }
    throw ConfigError("unknown schedule family");
}

DistillWeights schedule_weights(const ScheduleConfig& cfg, int epoch, Route route, double gap)
{
    const auto& onset = cfg.onsets[static_cast<std::size_t>(route_index(route))];
    const double e = static_cast<double>(epoch);
    DistillWeights w;
    w.epoch = epoch;
    w.route = route;
    w.alpha_gap = alpha_gap(gap, cfg.gap_low, cfg.gap_high);
    w.logit = ramp(cfg.family, e, onset.logit, cfg.tau_logit, cfg.ramp_length);
    w.feature = route == Route::NoFeature
                    ? 0.0
                    : ramp(cfg.family, e, onset.feature, cfg.tau_feature, cfg.ramp_length) * w.alpha_gap;
    return w;
}

}  // namespace gpd
