// Copyright 2026 The wattflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <random>
#include <stdexcept>

#include "support.hpp"
#include "wattflow/kernels.hpp"

using namespace wattflow;

namespace {

MockProfile random_mock(std::mt19937_64& rng, int width) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MockProfile m;
    m.spec.bit_width = width;
    m.seed = rng() | 1;
    for (int k = 0; k < 20; ++k) m.segments.push_back({1.0 + 30 * u(rng), 400 * u(rng)});
    return m;
}

std::vector<std::int64_t> times_for(double span_s, std::int64_t step_ns) {
    std::vector<std::int64_t> t;
    for (std::int64_t x = 0; x <= static_cast<std::int64_t>(span_s * 1e9); x += step_ns) t.push_back(x);
    return t;
}

}  // namespace

TEST_CASE("serial and OpenMP kernels agree bit for bit") {
    std::mt19937_64 rng(99);
    for (int width : {20, 32, 38, 64}) {
        const MockProfile m = random_mock(rng, width);
        const auto times = times_for(m.total_duration_s(), 100'000'000);
        const auto raw_s = kernels::serial::synthesize_raw(m, times);
        const auto raw_p = kernels::omp::synthesize_raw(m, times);
        REQUIRE(raw_s == raw_p);
        for (std::size_t i = 0; i < times.size(); i += 97) CHECK(raw_s[i] == m.raw_at(times[i] * 1e-9));

        SampleSeries s;
        s.spec = m.spec;
        for (std::size_t i = 0; i < times.size(); ++i) s.samples.push_back({times[i], raw_s[i]});
        CHECK(kernels::serial::wrap_deltas(s.samples, s.spec) == kernels::omp::wrap_deltas(s.samples, s.spec));

        const SeriesIntegrator integ(s);
        std::vector<kernels::NsWindow> windows;
        std::uniform_int_distribution<std::int64_t> pick(0, times.back());
        for (int i = 0; i < 2000; ++i) {
            auto a = pick(rng), b = pick(rng);
            if (a > b) std::swap(a, b);
            if (a == b) ++b;
            windows.emplace_back(a, b);
        }
        const auto ws = kernels::serial::integrate_windows(integ, windows);
        const auto wp = kernels::omp::integrate_windows(integ, windows);
        REQUIRE(ws.size() == wp.size());
        for (std::size_t i = 0; i < ws.size(); ++i) {
            CHECK(ws[i].energy.joules == wp[i].energy.joules);
            CHECK(ws[i].unsafe_gap == wp[i].unsafe_gap);
        }
        CHECK(ws[0].energy.joules == integ.integrate(windows[0].first, windows[0].second).energy.joules);
    }
}

TEST_CASE("wrap_deltas matches raw_delta") {
    const auto s = wftest::constant_series(250.0, 500'000'000, 300, CounterSpec{RaplDomain::Package, 24});
    const auto d = kernels::wrap_deltas(s.samples, s.spec);
    REQUIRE(d.size() == s.samples.size() - 1);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == raw_delta(s.samples[i].raw, s.samples[i + 1].raw, 24));
}

TEST_CASE("for_each_index visits every index once and rethrows") {
    for (auto exec : {kernels::Exec::Serial, kernels::Exec::Parallel}) {
        std::vector<std::atomic<int>> hits(1000);
        kernels::for_each_index(hits.size(), exec, [&](std::size_t i) { hits[i]++; });
        for (const auto& h : hits) CHECK(h.load() == 1);

        CHECK_THROWS_AS(kernels::for_each_index(100, exec,
                                                [](std::size_t i) {
                                                    if (i == 37) throw std::runtime_error("boom");
                                                }),
                        std::runtime_error);
        CHECK_NOTHROW(kernels::for_each_index(0, exec, [](std::size_t) { throw std::logic_error("never"); }));
    }
}
