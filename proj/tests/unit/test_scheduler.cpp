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
#include "gpd/scheduler.hpp"
#include "properties.hpp"

using gpd::Route;
using gpd::ScheduleFamily;

TEST_CASE("scheduler property suite")
{
    const auto f = props::scheduler_suite();
    INFO(f.summary());
    CHECK(f.ok());
}

TEST_CASE("alpha_gap examples")
{
    CHECK(gpd::alpha_gap(0.62, 0.40, 0.62) == 0.0);
    CHECK(gpd::alpha_gap(0.51, 0.40, 0.62) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gpd::alpha_gap(0.40, 0.40, 0.62) == 1.0);
    CHECK_THROWS_AS(gpd::alpha_gap(0.5, 0.6, 0.6), gpd::ConfigError);
}

TEST_CASE("sigmoid weights at the onset and route 0")
{
    gpd::ScheduleConfig cfg;
    const auto w = gpd::schedule_weights(cfg, 10, Route::Joint, 0.0);
    CHECK(w.logit == 0.5);
    CHECK(w.feature == 0.5);
    CHECK(w.alpha_gap == 1.0);
    CHECK(w.route == Route::Joint);
    CHECK(w.epoch == 10);
    for (int e : {0, 10, 60, 119}) {
        CHECK(gpd::schedule_weights(cfg, e, Route::NoFeature, 0.1).feature == 0.0);
    }
}

TEST_CASE("route onsets order logit and feature knowledge")
{
    gpd::ScheduleConfig cfg;
    const auto lf = gpd::schedule_weights(cfg, 30, Route::LogitFirst, 0.0);
    CHECK(lf.logit > 0.95);
    CHECK(lf.feature < 0.01);
    const auto ff = gpd::schedule_weights(cfg, 30, Route::FeatureFirst, 0.0);
    CHECK(ff.feature > 0.95);
    CHECK(ff.logit < 0.01);
}

TEST_CASE("ramp shapes")
{
    CHECK(gpd::ramp(ScheduleFamily::Linear, 30.0, 10.0, 5.0, 40.0) == doctest::Approx(0.5));
    CHECK(gpd::ramp(ScheduleFamily::Linear, 5.0, 10.0, 5.0, 40.0) == 0.0);
    CHECK(gpd::ramp(ScheduleFamily::Linear, 80.0, 10.0, 5.0, 40.0) == 1.0);
    CHECK(gpd::ramp(ScheduleFamily::Cosine, 30.0, 10.0, 5.0, 40.0) == doctest::Approx(0.5));
    CHECK(gpd::ramp(ScheduleFamily::Cosine, 20.0, 10.0, 5.0, 40.0) < 0.5 * 0.5);
    CHECK(gpd::ramp(ScheduleFamily::Step, 9.999, 10.0, 5.0, 40.0) == 0.0);
    CHECK(gpd::ramp(ScheduleFamily::Step, 10.0, 10.0, 5.0, 40.0) == 1.0);
}

TEST_CASE("family names and config validation")
{
    for (auto f : {ScheduleFamily::Sigmoid, ScheduleFamily::Linear, ScheduleFamily::Step, ScheduleFamily::Cosine}) {
        CHECK(gpd::family_from_name(gpd::family_name(f)) == f);
    }
    CHECK_THROWS_AS(gpd::family_from_name("exponential"), gpd::ConfigError);

    gpd::ScheduleConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.tau_logit = 0.0;
    CHECK_THROWS_AS(cfg.validate(), gpd::ConfigError);
    cfg = {};
    cfg.gap_low = cfg.gap_high;
    CHECK_THROWS_AS(cfg.validate(), gpd::ConfigError);
    cfg = {};
    cfg.onsets[1].feature = -1.0;
    CHECK_THROWS_AS(cfg.validate(), gpd::ConfigError);
}
