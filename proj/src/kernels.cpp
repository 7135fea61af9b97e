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

#include "wattflow/kernels.hpp"

#include <exception>
#include <mutex>

namespace wattflow::kernels {

namespace serial {

std::vector<WindowEnergy> integrate_windows(const SeriesIntegrator& integ,
                                            std::span<const NsWindow> windows) {
    std::vector<WindowEnergy> out;
    out.reserve(windows.size());
    for (const auto& [a, b] : windows) out.push_back(integ.integrate(a, b));
    return out;
}

std::vector<std::uint64_t> synthesize_raw(const MockProfile& profile,
                                          std::span<const std::int64_t> times_ns) {
    std::vector<std::uint64_t> out;
    out.reserve(times_ns.size());
    for (std::int64_t t : times_ns) out.push_back(profile.raw_at(static_cast<double>(t) * 1e-9));
    return out;
}

std::vector<std::uint64_t> wrap_deltas(std::span<const RawSample> samples, const CounterSpec& spec) {
    std::vector<std::uint64_t> out;
    if (samples.size() < 2) return out;
    out.reserve(samples.size() - 1);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        out.push_back(raw_delta(samples[i - 1].raw, samples[i].raw, spec));
    }
    return out;
}

}  // namespace serial

void for_each_index(std::size_t n, Exec exec, const std::function<void(std::size_t)>& body) {
    if (exec == Exec::Serial) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

namespace omp {

std::vector<WindowEnergy> integrate_windows(const SeriesIntegrator& integ,
                                            std::span<const NsWindow> windows) {
    std::vector<WindowEnergy> out(windows.size());
    for_each_index(windows.size(), Exec::Parallel, [&](std::size_t i) {
        out[i] = integ.integrate(windows[i].first, windows[i].second);
    });
    return out;
}

std::vector<std::uint64_t> synthesize_raw(const MockProfile& profile,
                                          std::span<const std::int64_t> times_ns) {
    std::vector<std::uint64_t> out(times_ns.size());
    const auto n = static_cast<std::ptrdiff_t>(times_ns.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            profile.raw_at(static_cast<double>(times_ns[static_cast<std::size_t>(i)]) * 1e-9);
    }
    return out;
}

std::vector<std::uint64_t> wrap_deltas(std::span<const RawSample> samples, const CounterSpec& spec) {
    if (samples.size() < 2) return {};
    std::vector<std::uint64_t> out(samples.size() - 1);
    for_each_index(out.size(), Exec::Parallel, [&](std::size_t i) {
        out[i] = raw_delta(samples[i].raw, samples[i + 1].raw, spec);
    });
    return out;
}

}  // namespace omp

std::vector<WindowEnergy> integrate_windows(const SeriesIntegrator& integ,
                                            std::span<const NsWindow> windows, Exec exec) {
    return exec == Exec::Serial ? serial::integrate_windows(integ, windows)
                                : omp::integrate_windows(integ, windows);
}

std::vector<std::uint64_t> synthesize_raw(const MockProfile& profile,
                                          std::span<const std::int64_t> times_ns, Exec exec) {
    return exec == Exec::Serial ? serial::synthesize_raw(profile, times_ns)
                                : omp::synthesize_raw(profile, times_ns);
}

std::vector<std::uint64_t> wrap_deltas(std::span<const RawSample> samples, const CounterSpec& spec,
                                       Exec exec) {
    return exec == Exec::Serial ? serial::wrap_deltas(samples, spec) : omp::wrap_deltas(samples, spec);
}

}  // namespace wattflow::kernels
