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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wattflow {

enum class RaplDomain { Package, Core, Graphics, Dram, Psys };

std::string_view to_string(RaplDomain d) noexcept;
std::optional<RaplDomain> parse_domain(std::string_view name) noexcept;

/// Geometry of one energy counter. The wrap modulus is 2^bit_width unless an
/// explicit modulus is given (powercap advertises `max_energy_range_uj`, which
/// is not a power of two).
struct CounterSpec {
    RaplDomain domain = RaplDomain::Package;
    int bit_width = 32;
    double energy_unit_joules = 1e-6;
    double update_period_s = 1e-3;
    std::optional<std::uint64_t> modulus_override;

    /// Largest representable raw value (modulus - 1).
    std::uint64_t max_raw() const noexcept;
    /// Modulus as a real; exact for every width up to 64.
    long double modulus() const noexcept;

    /// Throws InvalidArgument on out-of-range width or a non-positive unit.
    void validate() const;

    bool operator==(const CounterSpec&) const = default;
};

struct RawSample {
    std::int64_t t_ns = 0;
    std::uint64_t raw = 0;

    bool operator==(const RawSample&) const = default;
};

struct SampleSeries {
    std::string node_id;
    CounterSpec spec;
    std::vector<RawSample> samples;
    /// Wall time corresponding to t_ns == 0 of this series.
    std::int64_t epoch_wall_ns = 0;
    /// Instants at which the sampler recorded a read failure instead of a value.
    std::vector<std::int64_t> gap_markers;
    /// Upper bound on node power, used to derive the wrap-safety horizon.
    std::optional<double> max_power_watts;

    /// Shortest time in which the counter can wrap at max_power_watts.
    std::optional<std::int64_t> wrap_horizon_ns() const;

    /// Throws on non-monotonic timestamps or raw values outside the spec.
    void validate() const;

    bool operator==(const SampleSeries&) const = default;
};

struct EnergyQuantity {
    double joules = 0.0;

    /// Throws InvalidArgument unless finite and non-negative.
    static EnergyQuantity of(double joules);
};

/// Result of integrating a window. `unsafe_gap` is set when the window touches a
/// sampling gap longer than half the wrap-safety horizon, or a recorded gap
/// marker, so the single-wrap assumption may not hold there.
struct WindowEnergy {
    EnergyQuantity energy;
    bool unsafe_gap = false;
};

/// Wrap-aware difference of two readings, assuming at most one wrap.
std::uint64_t raw_delta(std::uint64_t prev, std::uint64_t curr, int bit_width);
/// Same, against an arbitrary modulus in [2, 2^64].
std::uint64_t raw_delta(std::uint64_t prev, std::uint64_t curr, const CounterSpec& spec);

EnergyQuantity to_joules(std::uint64_t raw_delta, const CounterSpec& spec);

/// Energy between two instants (series-local monotonic ns), linearly
/// interpolating cumulative energy at the boundaries.
WindowEnergy integrate_window(const SampleSeries& series, std::int64_t window_start_ns,
                              std::int64_t window_end_ns);

WindowEnergy series_total(const SampleSeries& series);

/// Precomputed unwrapped cumulative counts for one series, so many windows can
/// be integrated without re-walking the samples. Holds a reference; the series
/// must outlive it.
class SeriesIntegrator {
public:
    explicit SeriesIntegrator(const SampleSeries& series);

    WindowEnergy integrate(std::int64_t window_start_ns, std::int64_t window_end_ns) const;
    /// Cumulative energy in joules at `t_ns`, interpolated. Requires t within span.
    double cumulative_joules(std::int64_t t_ns) const;

    std::int64_t first_ns() const noexcept;
    std::int64_t last_ns() const noexcept;
    const SampleSeries& series() const noexcept { return *series_; }

private:
    long double cumulative_at(std::int64_t t_ns) const;
    bool touches_unsafe_gap(std::int64_t start_ns, std::int64_t end_ns) const;

    const SampleSeries* series_;
    std::vector<long double> cum_;
    std::optional<std::int64_t> horizon_ns_;
};

/// Unwrapped cumulative counts at every sample, starting at zero.
std::vector<long double> cumulative_counts(const SampleSeries& series);

}  // namespace wattflow
