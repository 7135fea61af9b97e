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

// Serial reference vs OpenMP kernels on synthetic week-long logs.
// Usage: wattflow_bench [samples] [windows] [repeats]
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "wattflow/kernels.hpp"

using namespace wattflow;

namespace {

double best_of(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, double serial, double parallel, bool same) {
    std::printf("%-20s %10.4f %10.4f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
                same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 500'000;
    const std::size_t nw = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 200'000;
    const int repeats = argc > 3 ? std::atoi(argv[3]) : 3;

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MockProfile m;
    m.spec.bit_width = 32;
    m.seed = 99;
    for (int k = 0; k < 200; ++k) m.segments.push_back({60 + 600 * u(rng), 40 + 300 * u(rng)});
    const double span = m.total_duration_s();
    std::vector<std::int64_t> times(n);
    for (std::size_t i = 0; i < n; ++i) times[i] = static_cast<std::int64_t>(span * 1e9 * i / (n - 1));

    std::printf("threads %d, %zu samples, %zu windows, best of %d\n", omp_get_max_threads(), n, nw, repeats);
    std::printf("%-20s %10s %10s %9s\n", "kernel", "serial s", "omp s", "speedup");

    std::vector<std::uint64_t> rs, rp;
    const double s1 = best_of(repeats, [&] { rs = kernels::serial::synthesize_raw(m, times); });
    const double p1 = best_of(repeats, [&] { rp = kernels::omp::synthesize_raw(m, times); });
    row("synthesize_raw", s1, p1, rs == rp);

    SampleSeries s;
    s.spec = m.spec;
    s.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.samples.push_back({times[i], rs[i]});
    std::vector<std::uint64_t> ds, dp;
    const double s2 = best_of(repeats, [&] { ds = kernels::serial::wrap_deltas(s.samples, s.spec); });
    const double p2 = best_of(repeats, [&] { dp = kernels::omp::wrap_deltas(s.samples, s.spec); });
    row("wrap_deltas", s2, p2, ds == dp);

    const SeriesIntegrator integ(s);
    std::vector<kernels::NsWindow> windows(nw);
    std::uniform_int_distribution<std::int64_t> pick(0, times.back());
    for (auto& w : windows) {
        auto a = pick(rng), b = pick(rng);
        if (a > b) std::swap(a, b);
        w = {a, b == a ? a + 1 : b};
    }
    std::vector<WindowEnergy> es, ep;
    const double s3 = best_of(repeats, [&] { es = kernels::serial::integrate_windows(integ, windows); });
    const double p3 = best_of(repeats, [&] { ep = kernels::omp::integrate_windows(integ, windows); });
    bool same = es.size() == ep.size();
    for (std::size_t i = 0; same && i < es.size(); ++i) {
        same = es[i].energy.joules == ep[i].energy.joules && es[i].unsafe_gap == ep[i].unsafe_gap;
    }
    row("integrate_windows", s3, p3, same);
    return 0;
}
