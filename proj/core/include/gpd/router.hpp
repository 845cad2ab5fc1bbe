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
#include <cstddef>
#include <optional>
#include <string_view>

namespace gpd {

/// Distillation route. Lower values are more conservative.
enum class Route : int {
    NoFeature = 0,
    LogitFirst = 1,
    Joint = 2,
    FeatureFirst = 3,
};

std::string_view route_name(Route r) noexcept;
constexpr int route_index(Route r) noexcept { return static_cast<int>(r); }
Route route_from_index(int index);

/// Entry/exit gap thresholds, ordered
///   nf_in <= nf_out <= d_in <= d_out <= f_out <= f_in.
struct ThresholdSet {
    double nf_in = 0.0;
    double nf_out = 0.0;
    double d_in = 0.0;
    double d_out = 0.0;
    double f_out = 0.0;
    double f_in = 0.0;

    static ThresholdSet video() { return {0.34, 0.40, 0.40, 0.48, 0.52, 0.60}; }
    static ThresholdSet audio() { return {0.40, 0.46, 0.54, 0.60, 0.68, 0.76}; }

    std::array<double, 6> as_array() const noexcept { return {nf_in, nf_out, d_in, d_out, f_out, f_in}; }
    ThresholdSet shifted(double delta) const noexcept;
    bool ordered() const noexcept;
    /// Throws ConfigError if the ordering is violated or a threshold leaves [0, 1].
    void validate() const;
    /// True when the route-2 entry interval [nf_out, d_in) is empty.
    bool joint_interval_empty() const noexcept { return !(nf_out < d_in); }
};

/// Maps a gap onto the route whose entry interval contains it. Returns
/// std::nullopt inside a hysteresis band.
std::optional<Route> classify_gap(double gap, const ThresholdSet& thresholds) noexcept;

/// Route for the first epoch: plain interval mapping, with band values
/// resolved to the neighbouring route on the larger-gap side.
Route initial_route(double gap, const ThresholdSet& thresholds) noexcept;

struct RouterDecision {
    Route route;
    std::optional<Route> indicated;
    std::size_t hold;
    bool switched;
};

/// Four-state hysteretic router with a minimum hold. Each switch moves one
/// step along the chain 0 <-> 1 <-> 2 <-> 3.
class Router {
public:
    Router(ThresholdSet thresholds, std::size_t min_hold = 3, double shift = 0.0);

    /// Sets the route from the first smoothed gap and resets the hold counter.
    RouterDecision start(double gap);
    RouterDecision step(double gap);

    /// Forces a route without classification (fixed-route runs).
    void pin(Route r) noexcept;

    Route route() const noexcept { return route_; }
    std::size_t hold() const noexcept { return hold_; }
    std::size_t min_hold() const noexcept { return min_hold_; }
    double shift() const noexcept { return shift_; }
    const ThresholdSet& base_thresholds() const noexcept { return base_; }
    const ThresholdSet& effective_thresholds() const noexcept { return effective_; }

private:
    ThresholdSet base_;
    ThresholdSet effective_;
    std::size_t min_hold_;
    double shift_;
    Route route_ = Route::NoFeature;
    std::size_t hold_ = 0;
};

}  // namespace gpd
