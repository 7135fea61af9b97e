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

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "wattflow/counter.hpp"
#include "wattflow/sampler.hpp"

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP version producing bit-identical output: each output element is
// computed independently and any reduction happens afterwards in index order.
namespace wattflow::kernels {

enum class Exec { Serial, Parallel };

using NsWindow = std::pair<std::int64_t, std::int64_t>;

/// Integrates many windows over one prepared series.
std::vector<WindowEnergy> integrate_windows(const SeriesIntegrator& integ,
                                            std::span<const NsWindow> windows,
                                            Exec exec = Exec::Parallel);

/// Counter values a profile produces at each sample time (ns since origin).
std::vector<std::uint64_t> synthesize_raw(const MockProfile& profile,
                                          std::span<const std::int64_t> times_ns,
                                          Exec exec = Exec::Parallel);

/// Wrap-aware deltas between consecutive samples (size n-1).
std::vector<std::uint64_t> wrap_deltas(std::span<const RawSample> samples, const CounterSpec& spec,
                                       Exec exec = Exec::Parallel);

namespace serial {
std::vector<WindowEnergy> integrate_windows(const SeriesIntegrator& integ,
                                            std::span<const NsWindow> windows);
std::vector<std::uint64_t> synthesize_raw(const MockProfile& profile,
                                          std::span<const std::int64_t> times_ns);
std::vector<std::uint64_t> wrap_deltas(std::span<const RawSample> samples, const CounterSpec& spec);
}  // namespace serial

namespace omp {
std::vector<WindowEnergy> integrate_windows(const SeriesIntegrator& integ,
                                            std::span<const NsWindow> windows);
std::vector<std::uint64_t> synthesize_raw(const MockProfile& profile,
                                          std::span<const std::int64_t> times_ns);
std::vector<std::uint64_t> wrap_deltas(std::span<const RawSample> samples, const CounterSpec& spec);
}  // namespace omp

/// Runs `body(i)` for i in [0, n), in parallel when asked. The first exception
/// thrown by any iteration is rethrown after the loop.
void for_each_index(std::size_t n, Exec exec, const std::function<void(std::size_t)>& body);

}  // namespace wattflow::kernels
