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

#include "wattflow/counter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "wattflow/error.hpp"

namespace wattflow {

namespace {

constexpr std::array<std::string_view, 5> kDomainNames{"package", "core", "graphics", "dram",
                                                       "psys"};

std::uint64_t mask_for(int bit_width) noexcept {
    return bit_width >= 64 ? std::numeric_limits<std::uint64_t>::max()
                           : (std::uint64_t{1} << bit_width) - 1;
}

void check_width(int bit_width) {
    if (bit_width < 1 || bit_width > 64) {
        throw Error(Errc::InvalidArgument,
                    "bit_width " + std::to_string(bit_width) + " outside [1, 64]");
    }
}

}  // namespace

std::string_view to_string(RaplDomain d) noexcept {
    return kDomainNames[static_cast<std::size_t>(d)];
}

std::optional<RaplDomain> parse_domain(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kDomainNames.size(); ++i) {
        if (kDomainNames[i] == name) return static_cast<RaplDomain>(i);
    }
    return std::nullopt;
}

std::uint64_t CounterSpec::max_raw() const noexcept {
    if (modulus_override) return *modulus_override - 1;
    return mask_for(bit_width);
}

long double CounterSpec::modulus() const noexcept {
    if (modulus_override) return static_cast<long double>(*modulus_override);
    return std::ldexp(1.0L, bit_width);
}

void CounterSpec::validate() const {
    check_width(bit_width);
    if (!std::isfinite(energy_unit_joules) || energy_unit_joules <= 0.0) {
        throw Error(Errc::InvalidArgument, "energy unit must be finite and positive");
    }
    if (!std::isfinite(update_period_s) || update_period_s <= 0.0) {
        throw Error(Errc::InvalidArgument, "update period must be finite and positive");
    }
    if (modulus_override && *modulus_override < 2) {
        throw Error(Errc::InvalidArgument, "wrap modulus must be at least 2");
    }
}

std::optional<std::int64_t> SampleSeries::wrap_horizon_ns() const {
    if (!max_power_watts || *max_power_watts <= 0.0) return std::nullopt;
    const long double seconds =
        spec.modulus() * static_cast<long double>(spec.energy_unit_joules) / *max_power_watts;
    if (seconds * 1e9L >= static_cast<long double>(std::numeric_limits<std::int64_t>::max())) {
        return std::nullopt;
    }
    return static_cast<std::int64_t>(seconds * 1e9L);
}

void SampleSeries::validate() const {
    spec.validate();
    const std::uint64_t limit = spec.max_raw();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].raw > limit) {
            throw Error(Errc::InvalidArgument,
                        "sample " + std::to_string(i) + " exceeds counter range");
        }
        if (i > 0 && samples[i].t_ns <= samples[i - 1].t_ns) {
            throw Error(Errc::InvalidArgument,
                        "non-monotonic timestamp at sample " + std::to_string(i));
        }
    }
}

EnergyQuantity EnergyQuantity::of(double joules) {
    if (!std::isfinite(joules) || joules < 0.0) {
        throw Error(Errc::InvalidArgument, "energy must be finite and non-negative");
    }
    return EnergyQuantity{joules};
}

std::uint64_t raw_delta(std::uint64_t prev, std::uint64_t curr, int bit_width) {
    check_width(bit_width);
    const std::uint64_t mask = mask_for(bit_width);
    if (prev > mask || curr > mask) {
        throw Error(Errc::InvalidArgument, "counter value exceeds 2^" + std::to_string(bit_width));
    }
    // Unsigned subtraction wraps mod 2^64; masking reduces it mod 2^bit_width.
    return (curr - prev) & mask;
}

std::uint64_t raw_delta(std::uint64_t prev, std::uint64_t curr, const CounterSpec& spec) {
    if (!spec.modulus_override) return raw_delta(prev, curr, spec.bit_width);
    const std::uint64_t m = *spec.modulus_override;
    if (prev >= m || curr >= m) {
        throw Error(Errc::InvalidArgument, "counter value exceeds wrap modulus");
    }
    return curr >= prev ? curr - prev : (m - prev) + curr;
}

EnergyQuantity to_joules(std::uint64_t raw_delta, const CounterSpec& spec) {
    spec.validate();
    const long double j = static_cast<long double>(raw_delta) * spec.energy_unit_joules;
    if (!std::isfinite(j) || j > std::numeric_limits<double>::max()) {
        throw Error(Errc::Overflow, "energy not representable");
    }
    return EnergyQuantity{static_cast<double>(j)};
}

std::vector<long double> cumulative_counts(const SampleSeries& series) {
    std::vector<long double> cum;
    cum.reserve(series.samples.size());
    long double acc = 0.0L;
    for (std::size_t i = 0; i < series.samples.size(); ++i) {
        if (i > 0) {
            acc += static_cast<long double>(
                raw_delta(series.samples[i - 1].raw, series.samples[i].raw, series.spec));
        }
        cum.push_back(acc);
    }
    return cum;
}

SeriesIntegrator::SeriesIntegrator(const SampleSeries& series)
    : series_(&series), horizon_ns_(series.wrap_horizon_ns()) {
    if (series.samples.size() < 2) {
        throw Error(Errc::DegenerateSeries,
                    "series for node '" + series.node_id + "' has fewer than 2 samples");
    }
    series.validate();
    cum_ = cumulative_counts(series);
}

std::int64_t SeriesIntegrator::first_ns() const noexcept { return series_->samples.front().t_ns; }
std::int64_t SeriesIntegrator::last_ns() const noexcept { return series_->samples.back().t_ns; }

long double SeriesIntegrator::cumulative_at(std::int64_t t_ns) const {
    const auto& s = series_->samples;
    if (t_ns < s.front().t_ns) {
        throw Error(Errc::WindowBeforeSeries, "window starts before first sample of node '" +
                                                  series_->node_id + "' (" +
                                                  std::string(to_string(series_->spec.domain)) + ")");
    }
    if (t_ns > s.back().t_ns) {
        throw Error(Errc::WindowAfterSeries, "window ends after last sample of node '" +
                                                 series_->node_id + "' (" +
                                                 std::string(to_string(series_->spec.domain)) + ")");
    }
    auto it = std::upper_bound(s.begin(), s.end(), t_ns,
                               [](std::int64_t t, const RawSample& r) { return t < r.t_ns; });
    const auto hi = static_cast<std::size_t>(it - s.begin());
    if (hi == s.size()) return cum_.back();
    const std::size_t lo = hi - 1;
    if (s[lo].t_ns == t_ns) return cum_[lo];
    const long double frac = static_cast<long double>(t_ns - s[lo].t_ns) /
                             static_cast<long double>(s[hi].t_ns - s[lo].t_ns);
    return cum_[lo] + (cum_[hi] - cum_[lo]) * frac;
}

double SeriesIntegrator::cumulative_joules(std::int64_t t_ns) const {
    return static_cast<double>(cumulative_at(t_ns) * series_->spec.energy_unit_joules);
}

bool SeriesIntegrator::touches_unsafe_gap(std::int64_t start_ns, std::int64_t end_ns) const {
    const auto& s = series_->samples;
    for (std::int64_t g : series_->gap_markers) {
        if (g >= start_ns && g <= end_ns) return true;
    }
    if (!horizon_ns_) return false;
    const std::int64_t limit = *horizon_ns_ / 2;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i].t_ns <= start_ns || s[i - 1].t_ns >= end_ns) continue;
        if (s[i].t_ns - s[i - 1].t_ns > limit) return true;
    }
    return false;
}

WindowEnergy SeriesIntegrator::integrate(std::int64_t window_start_ns,
                                         std::int64_t window_end_ns) const {
    if (window_start_ns >= window_end_ns) {
        throw Error(Errc::InvalidArgument, "window start must precede window end");
    }
    const long double counts = cumulative_at(window_end_ns) - cumulative_at(window_start_ns);
    const double joules = static_cast<double>(
        std::max(0.0L, counts) * static_cast<long double>(series_->spec.energy_unit_joules));
    return WindowEnergy{EnergyQuantity::of(joules),
                        touches_unsafe_gap(window_start_ns, window_end_ns)};
}

WindowEnergy integrate_window(const SampleSeries& series, std::int64_t window_start_ns,
                              std::int64_t window_end_ns) {
    return SeriesIntegrator(series).integrate(window_start_ns, window_end_ns);
}

WindowEnergy series_total(const SampleSeries& series) {
    SeriesIntegrator integ(series);
    return integ.integrate(integ.first_ns(), integ.last_ns());
}

}  // namespace wattflow
