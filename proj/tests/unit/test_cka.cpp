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

#include <cmath>

#include "gpd/cka.hpp"
#include "gpd/errors.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using gpd::FeatureSet;
using gpd::Matrix;

namespace {

double cka(const Matrix& x, const Matrix& y) { return gpd::linear_cka(FeatureSet(x), FeatureSet(y)); }

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian draw.
Matrix random_orthogonal(std::size_t n, gpd::Rng& rng)
{
    Matrix q = oracle::random_matrix(n, n, rng);
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

}  // namespace

TEST_CASE("identical feature sets have similarity one")
{
    gpd::Rng rng(1);
    const auto x = oracle::random_matrix(12, 5, rng);
    CHECK(cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthogonal transforms leave similarity at one")
{
    gpd::Rng rng(2);
    const auto x = oracle::random_matrix(15, 6, rng);
    const auto r = random_orthogonal(6, rng);
    CHECK(std::abs(cka(x, oracle::matmul(x, r)) - 1.0) < 1e-10);
}

TEST_CASE("fixed 4x2 pair matches the HSIC formulation")
{
    const auto x = Matrix::from_rows({{1, 2}, {3, 1}, {0, -1}, {2, 2}});
    const auto y = Matrix::from_rows({{0.5, 1}, {-1, 2}, {3, 0}, {1, 1}});
    CHECK(std::abs(cka(x, y) - oracle::hsic_cka(x, y)) < 1e-12);
}

TEST_CASE("random matrices agree with the HSIC oracle, lie in [0,1] and are symmetric")
{
    gpd::Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 3 + rng.index(8);
        const auto x = oracle::random_matrix(n, 1 + rng.index(5), rng);
        const auto y = oracle::random_matrix(n, 1 + rng.index(5), rng);
        const double v = cka(x, y);
        CHECK(std::abs(v - oracle::hsic_cka(x, y)) < 1e-10);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(std::abs(v - cka(y, x)) < 1e-14);
    }
}

TEST_CASE("scale and offset invariance")
{
    gpd::Rng rng(4);
    const auto x = oracle::random_matrix(20, 4, rng);
    const auto y = oracle::random_matrix(20, 3, rng);
    const double base = cka(x, y);
    for (double c : {-3.0, 0.01, 250.0}) {
        Matrix xs = x;
        for (auto& v : xs.values()) {
            v *= c;
        }
        CHECK(std::abs(cka(xs, y) - base) < 1e-10);
    }
    Matrix shifted = x;
    for (std::size_t i = 0; i < shifted.rows(); ++i) {
        for (std::size_t j = 0; j < shifted.cols(); ++j) {
            shifted(i, j) += 10.0 * static_cast<double>(j + 1);
        }
    }
    CHECK(std::abs(cka(shifted, y) - base) < 1e-10);
}

TEST_CASE("fuzzed similarity stays in [0,1]")
{
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        gpd::Rng rng(seed);
        const auto x = oracle::random_matrix(6, 3, rng);
        const auto y = oracle::random_matrix(6, 2, rng);
        const double v = cka(x, y);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("degenerate and malformed feature sets")
{
    const Matrix constant(5, 3, 2.0);
    gpd::Rng rng(5);
    const auto y = oracle::random_matrix(5, 2, rng);
    CHECK_THROWS_AS(cka(constant, y), gpd::DegenerateSimilarity);
    CHECK_THROWS_AS(cka(y, constant), gpd::DegenerateSimilarity);
    CHECK_THROWS_AS(FeatureSet(Matrix(1, 3)), gpd::DimensionError);
    CHECK_THROWS_AS(cka(oracle::random_matrix(4, 2, rng), oracle::random_matrix(5, 2, rng)), gpd::DimensionError);
    Matrix bad = oracle::random_matrix(4, 2, rng);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(FeatureSet{bad}, gpd::NumericError);
}

TEST_CASE("gap tracker examples")
{
    gpd::GapTracker first;
    CHECK(first.update(0.3) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(first.raw_gap() == doctest::Approx(0.7));
    CHECK(first.initialized());

    gpd::GapTracker t(0.8);
    t.update_raw(0.50);
    CHECK(t.update_raw(0.70) == doctest::Approx(0.54).epsilon(1e-14));

    gpd::GapTracker none(0.0);
    none.update(0.1);
    CHECK(none.update(0.6) == doctest::Approx(0.4));
    CHECK(none.update(0.25) == doctest::Approx(0.75));

    CHECK_THROWS_AS(gpd::GapTracker(1.0), gpd::ConfigError);
    CHECK_THROWS_AS(gpd::GapTracker(-0.1), gpd::ConfigError);
}

TEST_CASE("ema output is a convex combination")
{
    gpd::Rng rng(6);
    for (int run = 0; run < 100; ++run) {
        gpd::GapTracker t(rng.uniform(0.0, 0.99));
        double prev = t.update(rng.uniform());
        for (int e = 0; e < 30; ++e) {
            const double raw = rng.uniform();
            const double g = t.update_raw(raw);
            CHECK(g >= std::min(prev, raw) - 1e-15);
            CHECK(g <= std::max(prev, raw) + 1e-15);
            prev = g;
        }
    }
}

TEST_CASE("cka property suite")
{
    const auto f = props::cka_suite();
    INFO(f.summary());
    CHECK(f.ok());
}
