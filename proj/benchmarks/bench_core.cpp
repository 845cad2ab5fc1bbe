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


#include <benchmark/benchmark.h>

#include "gpd/cka.hpp"
#include "gpd/nets.hpp"
#include "gpd/numerics.hpp"
#include "gpd/router.hpp"

namespace {

gpd::Matrix random_matrix(std::size_t rows, std::size_t cols, gpd::Rng& rng)
{
    gpd::Matrix m(rows, cols);
    for (auto& v : m.values()) {
        v = rng.normal();
    }
    return m;
}

void BM_Matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    gpd::Rng rng(1);
    const auto a = random_matrix(n, n, rng);
    const auto b = random_matrix(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(gpd::matmul(a, b));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 512);

// One minibatch of 16 trials, 20 segments each.
void BM_StudentForwardBackward(benchmark::State& state)
{
    gpd::Rng rng(2);
    gpd::StudentNet net(gpd::StudentDims{}, 3);
    const auto x = random_matrix(320, 768, rng);
    const auto gl = random_matrix(320, 2, rng);
    const auto gf = random_matrix(320, 256, rng);
    gpd::StudentNet::Cache cache;
    gpd::Rng drop(4);
    for (auto _ : state) {
        const auto out = net.forward(x, gpd::Mode::Train, drop, cache);
        benchmark::DoNotOptimize(out.logits.values().data());
        net.backward(cache, gl, gf);
    }
}
BENCHMARK(BM_StudentForwardBackward);

void BM_LinearCka(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    gpd::Rng rng(5);
    const gpd::FeatureSet s(random_matrix(n, 256, rng));
    const gpd::FeatureSet t(random_matrix(n, 80, rng));
    for (auto _ : state) {
        benchmark::DoNotOptimize(gpd::linear_cka(s, t));
    }
}
BENCHMARK(BM_LinearCka)->Arg(120)->Arg(512)->Arg(2048);

void BM_RouterStep(benchmark::State& state)
{
    gpd::Rng rng(6);
    std::vector<double> gaps(4096);
    for (auto& g : gaps) {
        g = rng.uniform();
    }
    gpd::Router router(gpd::ThresholdSet::audio());
    router.start(gaps[0]);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(router.step(gaps[i++ & 4095]));
    }
}
BENCHMARK(BM_RouterStep);

}  // namespace
BENCHMARK_MAIN();
