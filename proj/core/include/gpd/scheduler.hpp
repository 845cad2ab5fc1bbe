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
#include <string>
#include <string_view>

#include "gpd/router.hpp"

namespace gpd {

enum class ScheduleFamily { Sigmoid, Linear, Step, Cosine };

std::string_view family_name(ScheduleFamily f) noexcept;
/// Throws ConfigError for unknown names.
ScheduleFamily family_from_name(std::string_view name);

struct RouteOnsets {
    double logit = 10.0;
    double feature = 10.0;
};

struct ScheduleConfig {
    ScheduleFamily family = ScheduleFamily::Sigmoid;
    /// Indexed by route (0..3), measured in absolute epochs from training start.
    std::array<RouteOnsets, 4> onsets = {{
        {10.0, 10.0},  // no-feature (feature onset unused)
        {10.0, 60.0},  // logit-first
        {10.0, 10.0},  // joint
        {60.0, 10.0},  // feature-first
    }};
    double tau_logit = 5.0;
    double tau_feature = 5.0;
    double ramp_length = 40.0;
    double gap_low = 0.46;
    double gap_high = 0.76;

    void validate() const;
};

struct DistillWeights {
    double logit = 0.0;
    double feature = 0.0;
    double alpha_gap = 0.0;
    int epoch = 0;
    Route route = Route::NoFeature;
};

/// Gap-aware factor: 1 below gap_low, 0 above gap_high, linear in between.
double alpha_gap(double gap, double gap_low, double gap_high);

/// 0 -> 1 ramp of the given family starting at @p onset.
double ramp(ScheduleFamily family, double epoch, double onset, double smoothness, double ramp_length);

DistillWeights schedule_weights(const ScheduleConfig& cfg, int epoch, Route route, double gap);

}  // namespace gpd
