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

// Property suites for gradients, CKA, router, scheduler and losses. Each suite
// returns the list of violated properties (empty on success) so the unit tests
// and the acceptance binary share one implementation.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpd/cka.hpp"
#include "gpd/engine.hpp"
#include "gpd/losses.hpp"
#include "gpd/router.hpp"
#include "gpd/scheduler.hpp"
#include "oracles.hpp"

namespace props {

class Failures {
public:
    void expect(bool ok, const std::string& what)
    {
        ++checks_;
        if (!ok && list_.size() < 20) {
            list_.push_back(what);
        }
        failed_ += ok ? 0 : 1;
    }
    bool ok() const { return failed_ == 0; }
    std::size_t checks() const { return checks_; }
    std::string summary() const
    {
        std::ostringstream os;
        os << failed_ << "/" << checks_ << " checks failed";
        for (const auto& s : list_) {
            os << "\n    " << s;
        }
        return os.str();
    }

private:
    std::vector<std::string> list_;
    std::size_t checks_ = 0;
    std::size_t failed_ = 0;
};

inline std::string num(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Gradients of the full student objective on a toy configuration.

struct ToyProblem {
    gpd::StudentNet student;
    gpd::ProjectionHead projection;
    std::vector<gpd::TrialTensors> trials;
    std::vector<gpd::TeacherTargets> targets;
};

/// Two subjects with random inputs, small layer widths and dropout off.
inline ToyProblem make_toy_problem(std::uint64_t seed)
{
    gpd::Rng rng(seed);
    ToyProblem p;
    p.student = gpd::StudentNet(gpd::StudentDims{12, 9, 7, 0.0}, seed + 1);
    p.projection = gpd::ProjectionHead(7, 5, seed + 2);
    for (int s = 0; s < 2; ++s) {
        gpd::TrialTensors t;
        t.subject_id = "toy" + std::to_string(s);
        t.d_star = 3 + 4 * s;
        t.features = oracle::random_matrix(gpd::kQuestions, 12, rng);
        for (std::size_t q = 0; q < gpd::kQuestions; ++q) {
            t.digits[q] = static_cast<int>((q * 7 + static_cast<std::size_t>(s)) % 10) + 1;
        }
        for (std::size_t q = 0; q < gpd::kQuestions; ++q) {
            t.labels[q] = t.digits[q] == t.d_star ? 1 : 0;
        }
        p.trials.push_back(t);
        gpd::TeacherTargets target;
        target.features = oracle::random_matrix(gpd::kQuestions, 5, rng);
        for (auto& e : target.evidence.scores) {
            e = rng.normal();
        }
        p.targets.push_back(target);
    }
    return p;
}

/// Max relative finite-difference error of the objective over all student and
/// projection parameters, for the given distillation weights.
inline double toy_gradient_error(ToyProblem& p, const gpd::DistillWeights& distill)
{
    std::vector<const gpd::TrialTensors*> batch{&p.trials[0], &p.trials[1]};
    std::vector<const gpd::TeacherTargets*> targets{&p.targets[0], &p.targets[1]};
    std::vector<gpd::Parameter*> params = p.student.parameters();
    for (auto* q : p.projection.parameters()) {
        params.push_back(q);
    }
    gpd::Rng unused(0);
    auto objective = [&] {
        return gpd::student_objective(p.student, p.projection, batch, targets, gpd::LossWeights{}, distill,
                                      gpd::Mode::Infer, unused, true)
            .total;
    };
    return gpd::grad_check(objective, params);
}

inline Failures gradient_suite()
{
    Failures f;
    const std::vector<gpd::DistillWeights> settings{
        {0.0, 0.0, 1.0, 1, gpd::Route::NoFeature},
        {0.8, 0.0, 1.0, 20, gpd::Route::NoFeature},
        {0.6, 0.7, 0.9, 30, gpd::Route::Joint},
        {0.3, 1.0, 1.0, 40, gpd::Route::FeatureFirst},
    };
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (const auto& w : settings) {
            auto problem = make_toy_problem(seed);
            const double err = toy_gradient_error(problem, w);
            f.expect(err <= 1e-4, "seed " + std::to_string(seed) + " w_l=" + num(w.logit) + " w_f=" + num(w.feature) +
                                      ": relative error " + num(err));
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// CKA

inline gpd::Matrix random_orthogonal(std::size_t n, gpd::Rng& rng)
{
    gpd::Matrix q = oracle::random_matrix(n, n, rng);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dot += q(i, j) * q(i, k);
            }
            for (std::size_t i = 0; i < n; ++i) {
                q(i, j) -= dot * q(i, k);
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            norm += q(i, j) * q(i, j);
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < n; ++i) {
            q(i, j) /= norm;
        }
    }
    return q;
}

inline double cka(const gpd::Matrix& x, const gpd::Matrix& y)
{
    return gpd::linear_cka(gpd::FeatureSet(x), gpd::FeatureSet(y));
}

inline Failures cka_suite()
{
    Failures f;
    gpd::Rng rng(2024);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 3 + rng.index(10);
        const std::size_t dx = 1 + rng.index(6);
        const std::size_t dy = 1 + rng.index(6);
        const auto x = oracle::random_matrix(n, dx, rng);
        const auto y = oracle::random_matrix(n, dy, rng);
        const std::string tag = "case " + std::to_string(i) + ": ";

        const double v = cka(x, y);
        const double ref = oracle::hsic_cka(x, y);
        f.expect(std::abs(v - ref) <= 1e-10, tag + "HSIC oracle " + num(ref) + " vs " + num(v));
        f.expect(v >= 0.0 && v <= 1.0, tag + "value outside [0,1]: " + num(v));
        f.expect(std::abs(v - cka(y, x)) <= 1e-10, tag + "asymmetric");
        f.expect(std::abs(cka(x, x) - 1.0) <= 1e-10, tag + "identity not 1");

        const auto r = random_orthogonal(dx, rng);
        f.expect(std::abs(cka(oracle::matmul(x, r), y) - v) <= 1e-10, tag + "orthogonal invariance");
        f.expect(std::abs(cka(x, oracle::matmul(x, r)) - 1.0) <= 1e-10, tag + "X vs XR not 1");

        gpd::Matrix scaled = x;
        const double c = std::exp(rng.uniform(-5.0, 5.0));
        for (auto& e : scaled.values()) {
            e *= c;
        }
        f.expect(std::abs(cka(scaled, y) - v) <= 1e-10, tag + "isotropic scale invariance");
    }
    return f;
}

// ---------------------------------------------------------------------------
// Router

/// Expected classification just below, at, and just above each published
/// threshold. -1 marks a hysteresis band.
struct BoundaryCase {
    double threshold;
    int below, at, above;
};

inline const std::vector<BoundaryCase>& audio_boundaries()
{
    static const std::vector<BoundaryCase> c{
        {0.40, 3, 3, -1}, {0.46, -1, 2, 2}, {0.54, 2, -1, -1},
        {0.60, -1, 1, 1}, {0.68, 1, -1, -1}, {0.76, -1, 0, 0},
    };
    return c;
}

inline const std::vector<BoundaryCase>& video_boundaries()
{
    // 0.40 is both nf_out and d_in, so the joint interval is empty.
    static const std::vector<BoundaryCase> c{
        {0.34, 3, 3, -1}, {0.40, -1, -1, -1}, {0.48, -1, 1, 1}, {0.52, 1, -1, -1}, {0.60, -1, 0, 0},
    };
    return c;
}

inline int as_int(std::optional<gpd::Route> r) { return r ? gpd::route_index(*r) : -1; }

inline void check_boundaries(Failures& f, const gpd::ThresholdSet& t, const std::vector<BoundaryCase>& cases,
                             const std::string& name)
{
    for (const auto& c : cases) {
        const double lo = std::nextafter(c.threshold, 0.0);
        const double hi = std::nextafter(c.threshold, 1.0);
        f.expect(as_int(gpd::classify_gap(lo, t)) == c.below, name + " below " + num(c.threshold));
        f.expect(as_int(gpd::classify_gap(c.threshold, t)) == c.at, name + " at " + num(c.threshold));
        f.expect(as_int(gpd::classify_gap(hi, t)) == c.above, name + " above " + num(c.threshold));
    }
}

inline Failures router_suite(int runs = 10000)
{
    Failures f;
    check_boundaries(f, gpd::ThresholdSet::audio(), audio_boundaries(), "audio");
    check_boundaries(f, gpd::ThresholdSet::video(), video_boundaries(), "video");

    gpd::Rng rng(77);
    for (int run = 0; run < runs; ++run) {
        const bool audio = rng.uniform() < 0.5;
        const auto base = audio ? gpd::ThresholdSet::audio() : gpd::ThresholdSet::video();
        const std::size_t hold = 1 + rng.index(5);
        const double delta = rng.uniform(-0.2, 0.2);
        const std::size_t length = 10 + rng.index(60);
        const std::string tag = "run " + std::to_string(run) + ": ";

        // Random walk mixed with occasional jumps, clamped to [0, 1].
        std::vector<double> gaps(length);
        double g = rng.uniform();
        for (auto& x : gaps) {
            g = rng.uniform() < 0.1 ? rng.uniform() : std::clamp(g + rng.normal() * 0.05, 0.0, 1.0);
            x = g;
        }

        gpd::Router router(base, hold);
        gpd::Router replay(base, hold);
        gpd::Router shifted(base, hold, delta);
        const bool shift_valid = [&] {
            try {
                base.shifted(delta).validate();
                return true;
            } catch (const std::exception&) {
                return false;
            }
        }();

        auto first = router.start(gaps[0]);
        auto first_replay = replay.start(gaps[0]);
        f.expect(first.route == first_replay.route, tag + "start replay");
        std::optional<gpd::RouterDecision> first_shifted;
        if (shift_valid) {
            first_shifted = shifted.start(gaps[0] + delta);
            f.expect(first_shifted->route == first.route, tag + "shift start");
        }

        std::size_t since_switch = 0;
        gpd::Route prev = first.route;
        for (std::size_t e = 1; e < length; ++e) {
            const auto d = router.step(gaps[e]);
            const auto indicated = gpd::classify_gap(gaps[e], base);
            const int step = gpd::route_index(d.route) - gpd::route_index(prev);
            f.expect(std::abs(step) <= 1, tag + "non-adjacent switch");
            if (d.switched) {
                f.expect(since_switch >= hold, tag + "switch before minimum hold");
                f.expect(indicated.has_value(), tag + "switch inside band");
                if (indicated) {
                    const int toward = gpd::route_index(*indicated) - gpd::route_index(prev);
                    f.expect(toward != 0 && (toward > 0) == (step > 0), tag + "switch away from indicated route");
                }
                since_switch = 0;
            } else {
                f.expect(step == 0, tag + "route changed without switch flag");
                ++since_switch;
                if (!indicated) {
                    f.expect(d.route == prev, tag + "band changed the route");
                }
            }
            f.expect(d.hold == since_switch, tag + "hold counter");
            f.expect(replay.step(gaps[e]).route == d.route, tag + "replay mismatch");
            if (shift_valid) {
                f.expect(shifted.step(gaps[e] + delta).route == d.route, tag + "shift equivalence");
            }
            prev = d.route;
        }
    }

    // Band constancy over long trajectories confined to a band.
    for (int run = 0; run < 200; ++run) {
        gpd::Router r(gpd::ThresholdSet::audio(), 3);
        r.start(0.50);
        const gpd::Route held = r.route();
        for (int e = 0; e < 500; ++e) {
            const double g = rng.uniform(0.4000001, 0.4599999);
            r.step(g);
        }
        f.expect(r.route() == held, "route left during a long band stay");
    }

    // Entry monotonicity: indicated states never become more aggressive as g grows.
    for (const auto& t : {gpd::ThresholdSet::audio(), gpd::ThresholdSet::video()}) {
        int last = 4;
        for (int i = 0; i <= 10000; ++i) {
            const auto r = gpd::classify_gap(i / 10000.0, t);
            if (r) {
                f.expect(gpd::route_index(*r) <= last, "entry monotonicity at " + num(i / 10000.0));
                last = gpd::route_index(*r);
            }
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Scheduler

inline Failures scheduler_suite()
{
    Failures f;
    using gpd::ScheduleFamily;
    const ScheduleFamily families[] = {ScheduleFamily::Sigmoid, ScheduleFamily::Linear, ScheduleFamily::Step,
                                       ScheduleFamily::Cosine};
    const gpd::Route routes[] = {gpd::Route::NoFeature, gpd::Route::LogitFirst, gpd::Route::Joint,
                                 gpd::Route::FeatureFirst};
    const double gaps[] = {0.0, 0.3, 0.46, 0.55, 0.61, 0.76, 0.9};

    for (auto family : families) {
        gpd::ScheduleConfig cfg;
        cfg.family = family;
        const std::string fam(gpd::family_name(family));
        for (auto route : routes) {
            const std::string tag = fam + "/" + std::string(gpd::route_name(route));
            for (double g : gaps) {
                gpd::DistillWeights prev = gpd::schedule_weights(cfg, 0, route, g);
                for (int e = 0; e <= 200; ++e) {
                    const auto w = gpd::schedule_weights(cfg, e, route, g);
                    f.expect(w.logit >= prev.logit && w.feature >= prev.feature,
                             tag + " not monotone at epoch " + std::to_string(e));
                    f.expect(w.logit >= 0.0 && w.logit <= 1.0 && w.feature >= 0.0 && w.feature <= 1.0,
                             tag + " weight outside [0,1]");
                    f.expect(w.feature <= w.alpha_gap, tag + " w_f exceeds alpha_gap");
                    if (route == gpd::Route::NoFeature) {
                        f.expect(w.feature == 0.0, tag + " route 0 feature weight " + num(w.feature));
                    }
                    prev = w;
                }
            }
            // Non-increasing in the gap at fixed epoch.
            for (int e : {0, 10, 35, 70, 120}) {
                double last = 2.0;
                for (int i = 0; i <= 100; ++i) {
                    const double w = gpd::schedule_weights(cfg, e, route, i / 100.0).feature;
                    f.expect(w <= last, tag + " w_f increases with gap");
                    last = w;
                }
            }
        }
    }

    gpd::ScheduleConfig sig;
    for (auto route : routes) {
        const auto& onset = sig.onsets[static_cast<std::size_t>(gpd::route_index(route))];
        const int bl = static_cast<int>(onset.logit);
        f.expect(gpd::schedule_weights(sig, bl, route, 0.0).logit == 0.5, "sigmoid w_l at onset is not 0.5");
        const int late = bl + static_cast<int>(6 * sig.tau_logit);
        f.expect(gpd::schedule_weights(sig, late, route, 0.0).logit > 0.99, "sigmoid w_l six taus after onset");
    }

    gpd::ScheduleConfig step;
    step.family = ScheduleFamily::Step;
    const int bf = static_cast<int>(step.onsets[2].feature);
    f.expect(gpd::schedule_weights(step, bf - 1, gpd::Route::Joint, 0.0).feature == 0.0, "step before onset");
    f.expect(gpd::schedule_weights(step, bf, gpd::Route::Joint, 0.0).feature == 1.0, "step at onset");

    f.expect(gpd::alpha_gap(0.62, 0.40, 0.62) == 0.0, "alpha_gap at g_high");
    f.expect(std::abs(gpd::alpha_gap(0.51, 0.40, 0.62) - 0.5) < 1e-12, "alpha_gap midpoint");
    f.expect(gpd::alpha_gap(0.40, 0.40, 0.62) == 1.0, "alpha_gap at g_low");
    f.expect(gpd::alpha_gap(0.46, 0.46, 0.76) == 1.0, "audio alpha_gap at g_low");
    f.expect(gpd::alpha_gap(0.76, 0.46, 0.76) == 0.0, "audio alpha_gap at g_high");
    f.expect(gpd::alpha_gap(0.1, 0.40, 0.62) == 1.0 && gpd::alpha_gap(0.9, 0.40, 0.62) == 0.0,
             "alpha_gap outside band");
    return f;
}

// ---------------------------------------------------------------------------
// Losses

inline std::array<double, 10> random10(gpd::Rng& rng, double scale)
{
    std::array<double, 10> a{};
    for (auto& v : a) {
        v = scale * rng.normal();
    }
    return a;
}

inline gpd::EvidenceVector ev(const std::array<double, 10>& a)
{
    gpd::EvidenceVector e;
    e.scores = a;
    return e;
}

inline Failures loss_suite()
{
    Failures f;
    gpd::Rng rng(99);

    // Logit KD against direct summation, zero iff softened distributions agree.
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform(0.5, 4.0);
        const auto a = random10(rng, 3.0);
        const auto b = random10(rng, 3.0);
        const double v = gpd::logit_kd_loss(ev(a), ev(b), t);
        const double ref = oracle::kl10(a, b, t);
        f.expect(std::abs(v - ref) <= 1e-12 * std::max(1.0, ref), "logit kd oracle " + num(ref) + " vs " + num(v));
        f.expect(v > 0.0, "logit kd not positive for differing evidence");
        f.expect(gpd::logit_kd_loss(ev(a), ev(a), t) == 0.0, "logit kd of identical evidence");

        auto shifted = a;
        const double c = rng.uniform(-50.0, 50.0);
        for (auto& x : shifted) {
            x += c;
        }
        f.expect(std::abs(gpd::logit_kd_loss(ev(shifted), ev(a), t)) <= 1e-12, "logit kd shift");
        auto b_shift = b;
        for (auto& x : b_shift) {
            x += c;
        }
        f.expect(std::abs(gpd::logit_kd_loss(ev(shifted), ev(b_shift), t) - v) <= 1e-12 * std::max(1.0, v),
                 "logit kd joint shift invariance");

        const int d = 1 + static_cast<int>(rng.index(10));
        const auto p = oracle::softmax10(a, 1.0);
        const double ce_ref = -std::log(p[static_cast<std::size_t>(d - 1)]);
        const double ce = gpd::digit_ce(ev(a), d);
        f.expect(std::abs(ce - ce_ref) <= 1e-12 * std::max(1.0, ce_ref), "digit ce oracle");
        f.expect(std::abs(gpd::digit_ce(ev(shifted), d) - ce) <= 1e-12 * std::max(1.0, ce), "digit ce shift");
        f.expect(gpd::top_digit(ev(shifted)) == gpd::top_digit(ev(a)), "argmax shift");
    }

    // Uniform evidence.
    for (double c : {0.0, 1.0, -7.5, 300.0}) {
        gpd::EvidenceVector u;
        u.scores.fill(c);
        for (int d = 1; d <= 10; ++d) {
            f.expect(std::abs(gpd::digit_ce(u, d) - std::log(10.0)) <= 1e-12, "digit ce uniform " + num(c));
        }
    }

    // Question CE, feature KD, aggregation and total against elementwise oracles.
    for (int i = 0; i < 200; ++i) {
        std::vector<double> p(20);
        std::vector<int> y(20);
        double ref = 0.0;
        for (std::size_t q = 0; q < 20; ++q) {
            p[q] = rng.uniform(0.01, 0.99);
            y[q] = rng.uniform() < 0.3 ? 1 : 0;
            ref -= y[q] ? std::log(p[q]) : std::log(1.0 - p[q]);
        }
        ref /= 20.0;
        f.expect(std::abs(gpd::question_ce(p, y) - ref) <= 1e-12, "question ce oracle");

        const std::size_t rows = 1 + rng.index(20);
        const auto s = oracle::random_matrix(rows, 80, rng);
        const auto t = oracle::random_matrix(rows, 80, rng);
        double fref = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < 80; ++c) {
                fref += (s(r, c) - t(r, c)) * (s(r, c) - t(r, c));
            }
        }
        fref /= static_cast<double>(rows);
        f.expect(std::abs(gpd::feat_kd_loss(s, t) - fref) <= 1e-12 * std::max(1.0, fref), "feat kd oracle");

        std::vector<double> z(20);
        std::vector<int> digits(20);
        std::array<double, 10> eref{};
        for (std::size_t q = 0; q < 20; ++q) {
            digits[q] = static_cast<int>(q % 10) + 1;
        }
        rng.shuffle(digits.begin(), digits.end());
        for (std::size_t q = 0; q < 20; ++q) {
            z[q] = rng.normal();
        }
        for (int d = 1; d <= 10; ++d) {
            for (std::size_t q = 0; q < 20; ++q) {
                if (digits[q] == d) {
                    eref[static_cast<std::size_t>(d - 1)] += z[q];
                }
            }
        }
        const auto e = gpd::aggregate_evidence(z, digits);
        for (std::size_t d = 0; d < 10; ++d) {
            f.expect(std::abs(e.scores[d] - eref[d]) <= 1e-12, "aggregate evidence oracle");
        }

        gpd::LossComponents comp{rng.uniform(0, 2), rng.uniform(0, 3), rng.uniform(0, 5), rng.uniform(0, 1)};
        gpd::LossWeights lw;
        gpd::DistillWeights dw{rng.uniform(), rng.uniform(), 1.0, 5, gpd::Route::Joint};
        const double hand = comp.question + 0.3 * comp.digit + 1.0 * (0.2 * dw.feature * comp.feature +
                                                                      0.7 * dw.logit * comp.logit);
        f.expect(std::abs(gpd::total_loss(comp, lw, dw) - hand) <= 1e-12, "total loss expansion");
        dw.feature = 0.0;
        dw.logit = 0.0;
        f.expect(std::abs(gpd::total_loss(comp, lw, dw) - (comp.question + 0.3 * comp.digit)) <= 1e-12,
                 "total loss with distillation off");
    }
    return f;
}

}  // namespace props
