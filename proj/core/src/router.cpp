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


#include "gpd/router.hpp"

#include <string>

#include "gpd/errors.hpp"

namespace gpd {

std::string_view route_name(Route r) noexcept
{
    switch (r) {
        case Route::NoFeature: return "no-feature";
        case Route::LogitFirst: return "logit-first";
        case Route::Joint: return "joint";
        case Route::FeatureFirst: return "feature-first";
    }
    return "unknown";
}

Route route_from_index(int index)
{
    if (index < 0 || index > 3) {
        throw ConfigError("route index must be 0..3, got " + std::to_string(index));
    }
    return static_cast<Route>(index);
}

ThresholdSet ThresholdSet::shifted(double delta) const noexcept
{
    return {nf_in + delta, nf_out + delta, d_in + delta, d_out + delta, f_out + delta, f_in + delta};
}

bool ThresholdSet::ordered() const noexcept
{
    return nf_in <= nf_out && nf_out <= d_in && d_in <= d_out && d_out <= f_out && f_out <= f_in;
}

void ThresholdSet::validate() const
{
    if (!ordered()) {
        throw ConfigError("routing thresholds violate nf_in <= nf_out <= d_in <= d_out <= f_out <= f_in");
    }
    for (double t : as_array()) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw ConfigError("routing threshold " + std::to_string(t) + " outside [0, 1]");
        }
    }
}

std::optional<Route> classify_gap(double gap, const ThresholdSet& t) noexcept
{
    if (gap <= t.nf_in) {
        return Route::FeatureFirst;
    }
    if (t.nf_out <= gap && gap < t.d_in) {
        return Route::Joint;
    }
    if (t.d_out <= gap && gap < t.f_out) {
        return Route::LogitFirst;
    }
    if (gap >= t.f_in) {
        return Route::NoFeature;
    }
    return std::nullopt;
}

Route initial_route(double gap, const ThresholdSet& t) noexcept
{
    if (auto r = classify_gap(gap, t)) {
        return *r;
    }
    // Bands, from smallest gap upwards; each resolves to its larger-gap side.
    if (gap < t.nf_out) {
        return Route::Joint;
    }
    if (gap < t.d_out) {
        return Route::LogitFirst;
    }
    return Route::NoFeature;
}

Router::Router(ThresholdSet thresholds, std::size_t min_hold, double shift)
    : base_(thresholds), effective_(thresholds.shifted(shift)), min_hold_(min_hold), shift_(shift)
{
    base_.validate();
    effective_.validate();
}

RouterDecision Router::start(double gap)
{
    route_ = initial_route(gap, effective_);
    hold_ = 0;
    return {route_, classify_gap(gap, effective_), hold_, false};
}

RouterDecision Router::step(double gap)
{
    auto indicated = classify_gap(gap, effective_);
    if (hold_ < min_hold_ || !indicated || *indicated == route_) {
        ++hold_;
        return {route_, indicated, hold_, false};
    }
    int current = route_index(route_);
    int target = route_index(*indicated);
    route_ = static_cast<Route>(current + (target > current ? 1 : -1));
    hold_ = 0;
    return {route_, indicated, hold_, true};
}

void Router::pin(Route r) noexcept
{
    route_ = r;
    hold_ = 0;
}

}  // namespace gpd
