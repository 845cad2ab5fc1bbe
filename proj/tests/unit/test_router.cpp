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


#include <doctest.h>

#include "gpd/errors.hpp"
#include "gpd/router.hpp"
#include "properties.hpp"

using gpd::Route;
using gpd::Router;
using gpd::ThresholdSet;

TEST_CASE("published threshold sets are ordered")
{
    CHECK(ThresholdSet::video().ordered());
    CHECK(ThresholdSet::audio().ordered());
    CHECK(ThresholdSet::video().joint_interval_empty());
    CHECK_FALSE(ThresholdSet::audio().joint_interval_empty());
    CHECK_NOTHROW(ThresholdSet::video().validate());
    CHECK_THROWS_AS((ThresholdSet{0.5, 0.4, 0.6, 0.7, 0.8, 0.9}.validate()), gpd::ConfigError);
    CHECK_THROWS_AS(ThresholdSet::audio().shifted(0.3).validate(), gpd::ConfigError);
}

TEST_CASE("classify_gap on audio thresholds")
{
    const auto a = ThresholdSet::audio();
    CHECK(gpd::classify_gap(0.30, a) == Route::FeatureFirst);
    CHECK(gpd::classify_gap(0.50, a) == Route::Joint);
    CHECK_FALSE(gpd::classify_gap(0.57, a).has_value());
    CHECK(gpd::classify_gap(0.64, a) == Route::LogitFirst);
    CHECK(gpd::classify_gap(0.80, a) == Route::NoFeature);
    CHECK_FALSE(gpd::classify_gap(0.44, a).has_value());
    CHECK_FALSE(gpd::classify_gap(0.72, a).has_value());
}

TEST_CASE("classification at every published boundary")
{
    // Each case: gap, expected indication (nullopt = band).
    struct Case {
        double gap;
        std::optional<Route> route;
    };
    const std::vector<Case> audio{{0.40, Route::FeatureFirst}, {0.46, Route::Joint},     {0.54, std::nullopt},
                                  {0.60, Route::LogitFirst},   {0.68, std::nullopt},     {0.76, Route::NoFeature}};
    for (const auto& c : audio) {
        CAPTURE(c.gap);
        CHECK(gpd::classify_gap(c.gap, ThresholdSet::audio()) == c.route);
    }
    // Video: the joint interval [0.40, 0.40) is empty, so 0.40 falls in the band.
    const std::vector<Case> video{{0.34, Route::FeatureFirst}, {0.40, std::nullopt}, {0.48, Route::LogitFirst},
                                  {0.52, std::nullopt},        {0.60, Route::NoFeature}};
    for (const auto& c : video) {
        CAPTURE(c.gap);
        CHECK(gpd::classify_gap(c.gap, ThresholdSet::video()) == c.route);
    }
}

TEST_CASE("initial route resolves bands to the larger-gap side")
{
    const auto a = ThresholdSet::audio();
    CHECK(gpd::initial_route(0.80, a) == Route::NoFeature);
    CHECK(gpd::initial_route(0.44, a) == Route::Joint);
    CHECK(gpd::initial_route(0.30, a) == Route::FeatureFirst);
    CHECK(gpd::initial_route(0.57, a) == Route::LogitFirst);
    CHECK(gpd::initial_route(0.72, a) == Route::NoFeature);

    const auto v = ThresholdSet::video();
    CHECK(gpd::initial_route(0.37, v) == Route::Joint);
    CHECK(gpd::initial_route(0.40, v) == Route::LogitFirst);
    CHECK(gpd::initial_route(0.56, v) == Route::NoFeature);
}

TEST_CASE("step honours the minimum hold")
{
    Router r(ThresholdSet::audio(), 3);
    r.start(0.80);
    CHECK(r.route() == Route::NoFeature);
    CHECK(r.hold() == 0);
    auto d = r.step(0.30);
    CHECK(d.route == Route::NoFeature);
    CHECK(d.hold == 1);
    CHECK_FALSE(d.switched);
}

TEST_CASE("band retention and single-step adjacency")
{
    Router r(ThresholdSet::audio(), 3);
    r.start(0.50);
    CHECK(r.route() == Route::Joint);
    for (int i = 0; i < 5; ++i) {
        CHECK(r.step(0.44).route == Route::Joint);
    }

    Router jump(ThresholdSet::audio(), 3);
    jump.start(0.90);
    for (int i = 0; i < 3; ++i) {
        jump.step(0.90);
    }
    CHECK(jump.hold() == 3);
    const auto d = jump.step(0.30);
    CHECK(d.route == Route::LogitFirst);
    CHECK(d.indicated == Route::FeatureFirst);
    CHECK(d.switched);
    CHECK(d.hold == 0);
}

TEST_CASE("pin forces a route")
{
    Router r(ThresholdSet::video());
    r.pin(Route::Joint);
    CHECK(r.route() == Route::Joint);
    CHECK(r.hold() == 0);
}

TEST_CASE("shift moves thresholds uniformly")
{
    Router r(ThresholdSet::audio(), 3, 0.05);
    const auto e = r.effective_thresholds().as_array();
    const auto b = ThresholdSet::audio().as_array();
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(e[i] == doctest::Approx(b[i] + 0.05).epsilon(1e-15));
    }
    CHECK_THROWS_AS(Router(ThresholdSet::audio(), 3, 0.5), gpd::ConfigError);
}

TEST_CASE("route names and indices")
{
    CHECK(gpd::route_name(Route::NoFeature) == "no-feature");
    CHECK(gpd::route_name(Route::FeatureFirst) == "feature-first");
    CHECK(gpd::route_from_index(2) == Route::Joint);
    CHECK_THROWS_AS(gpd::route_from_index(4), gpd::ConfigError);
}

TEST_CASE("router fuzz and boundary suite")
{
    const auto f = props::router_suite(2000);
    INFO(f.summary());
    CHECK(f.ok());
}
