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

#include <cmath>
#include <random>

#include "support.hpp"
#include "wattflow/counter.hpp"
#include "wattflow/error.hpp"

using namespace wattflow;
using wftest::code_of;
using wftest::constant_series;

namespace {

using u128 = unsigned __int128;

u128 pow2(int bits) { return u128{1} << bits; }

}  // namespace

TEST_CASE("domain names are lowercase and round-trip") {
    for (auto d : {RaplDomain::Package, RaplDomain::Core, RaplDomain::Graphics, RaplDomain::Dram, RaplDomain::Psys}) {
        const auto name = to_string(d);
        for (char c : name) CHECK(std::islower(static_cast<unsigned char>(c)));
        CHECK(parse_domain(name) == d);
    }
    CHECK(to_string(RaplDomain::Dram) == "dram");
    CHECK_FALSE(parse_domain("Package").has_value());
    CHECK_FALSE(parse_domain("uncore").has_value());
}

TEST_CASE("counter spec validation") {
    CounterSpec s;
    CHECK_NOTHROW(s.validate());
    s.bit_width = 0;
    CHECK(code_of([&] { s.validate(); }) == Errc::InvalidArgument);
    s.bit_width = 65;
    CHECK(code_of([&] { s.validate(); }) == Errc::InvalidArgument);
    s.bit_width = 64;
    CHECK_NOTHROW(s.validate());
    CHECK(s.max_raw() == ~std::uint64_t{0});
    s.energy_unit_joules = 0.0;
    CHECK(code_of([&] { s.validate(); }) == Errc::InvalidArgument);
    s.energy_unit_joules = std::nan("");
    CHECK(code_of([&] { s.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("raw_delta examples") {
    CHECK(raw_delta(100, 250, 38) == 150);
    const std::uint64_t x = 123456789;
    CHECK(raw_delta(x, x, 38) == 0);
    CHECK(raw_delta((std::uint64_t{1} << 38) - 10, 5, 38) == 15);
    CHECK(raw_delta(~std::uint64_t{0}, 0, 64) == 1);
    CHECK(raw_delta(1, 0, 1) == 1);
}

TEST_CASE("raw_delta rejects out-of-range readings") {
    CHECK(code_of([] { raw_delta(std::uint64_t{1} << 32, 0, 32); }) == Errc::InvalidArgument);
    CHECK(code_of([] { raw_delta(0, std::uint64_t{1} << 38, 38); }) == Errc::InvalidArgument);
    CHECK(code_of([] { raw_delta(0, 1, 0); }) == Errc::InvalidArgument);
}

TEST_CASE("raw_delta against an unbounded counter") {
    std::mt19937_64 rng(42);
    const int widths[] = {1, 7, 20, 32, 36, 38, 63, 64};
    for (int w : widths) {
        for (int i = 0; i < 20000; ++i) {
            const u128 mod = pow2(w);
            const u128 prev_true = (u128{rng()} << 64 | rng()) % (mod * 4);
            const u128 inc = (u128{rng()} << 64 | rng()) % mod;  // true increment < modulus
            const u128 curr_true = prev_true + inc;
            const auto prev = static_cast<std::uint64_t>(prev_true % mod);
            const auto curr = static_cast<std::uint64_t>(curr_true % mod);
            REQUIRE(raw_delta(prev, curr, w) == static_cast<std::uint64_t>(inc));
        }
    }
}

TEST_CASE("raw_delta with a non power-of-two modulus") {
    CounterSpec s;
    s.modulus_override = 262143328850ULL;  // a powercap max_energy_range_uj + 1
    CHECK(raw_delta(262143328849ULL, 10, s) == 11);
    CHECK(raw_delta(5, 10, s) == 5);
    CHECK(code_of([&] { raw_delta(262143328850ULL, 0, s); }) == Errc::InvalidArgument);
}

TEST_CASE("to_joules") {
    CounterSpec s;
    CHECK(to_joules(1'000'000, s).joules == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(to_joules(0, s).joules == 0.0);
    s.energy_unit_joules = std::ldexp(1.0, -16);
    CHECK(to_joules(std::uint64_t{1} << 20, s).joules == 16.0);
    s.energy_unit_joules = 1e300;
    CHECK(code_of([&] { to_joules(~std::uint64_t{0}, s); }) == Errc::Overflow);
}

TEST_CASE("energy quantity rejects negative and non-finite values") {
    CHECK(EnergyQuantity::of(0.0).joules == 0.0);
    CHECK(code_of([] { EnergyQuantity::of(-1e-12); }) == Errc::InvalidArgument);
    CHECK(code_of([] { EnergyQuantity::of(INFINITY); }) == Errc::InvalidArgument);
}

TEST_CASE("integrate_window on a constant 100 W ramp") {
    // 1 s samples, 1e8 counts per step
    const auto s = constant_series(100.0, 1'000'000'000, 11);
    CHECK(s.samples[1].raw == 100'000'000);
    const auto e = integrate_window(s, 2'500'000'000, 7'500'000'000);
    CHECK(e.energy.joules == doctest::Approx(500.0).epsilon(1e-12));
    CHECK_FALSE(e.unsafe_gap);
    CHECK(integrate_window(s, 0, 10'000'000'000).energy.joules == series_total(s).energy.joules);
}

TEST_CASE("series_total simple cases") {
    SampleSeries s;
    s.spec = CounterSpec{};
    s.samples = {{0, 0}, {1'000'000, 1000}};
    CHECK(series_total(s).energy.joules == doctest::Approx(1e-3).epsilon(1e-15));
    s.samples = {{0, 17}, {10, 20}, {20, 1017}};
    CHECK(series_total(s).energy.joules == doctest::Approx(1000e-6).epsilon(1e-15));
}

TEST_CASE("a 38-bit wrap under constant load matches the unbounded oracle") {
    CounterSpec spec;
    spec.bit_width = 38;
    const u128 start = pow2(38) - 12345;
    const auto s = constant_series(100.0, 500'000'000, 121, spec, start);
    bool wrapped = false;
    for (std::size_t i = 1; i < s.samples.size(); ++i) wrapped |= s.samples[i].raw < s.samples[i - 1].raw;
    REQUIRE(wrapped);
    // Oracle: the unreduced counter difference, 100 W over 60 s.
    CHECK(series_total(s).energy.joules == doctest::Approx(6000.0).epsilon(1e-12));
    CHECK(integrate_window(s, 1'250'000'000, 41'250'000'000).energy.joules == doctest::Approx(4000.0).epsilon(1e-12));
}

TEST_CASE("integration errors") {
    const auto s = constant_series(10.0, 1'000'000'000, 5);
    CHECK(code_of([&] { integrate_window(s, -1, 10); }) == Errc::WindowBeforeSeries);
    CHECK(code_of([&] { integrate_window(s, 0, 4'000'000'001); }) == Errc::WindowAfterSeries);
    CHECK(code_of([&] { integrate_window(s, 10, 10); }) == Errc::InvalidArgument);
    SampleSeries one = s;
    one.samples.resize(1);
    CHECK(code_of([&] { series_total(one); }) == Errc::DegenerateSeries);
    CHECK(errc_name(Errc::WindowBeforeSeries) != errc_name(Errc::WindowAfterSeries));
}

TEST_CASE("additivity, monotonicity and non-negativity over random series") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 200; ++round) {
        CounterSpec spec;
        spec.bit_width = std::uniform_int_distribution<int>(20, 40)(rng);
        SampleSeries s;
        s.spec = spec;
        std::int64_t t = 0;
        u128 counter = rng() % pow2(spec.bit_width);
        const std::uint64_t mod_mask = (std::uint64_t{1} << spec.bit_width) - 1;
        for (int i = 0; i < 50; ++i) {
            s.samples.push_back({t, static_cast<std::uint64_t>(counter) & mod_mask});
            t += std::uniform_int_distribution<std::int64_t>(1'000'000, 900'000'000)(rng);
            counter += rng() % (std::uint64_t{1} << (spec.bit_width - 1));
        }
        const std::int64_t last = s.samples.back().t_ns;
        std::uniform_int_distribution<std::int64_t> pick(0, last);
        std::int64_t a = pick(rng), b = pick(rng), c = pick(rng);
        if (a > b) std::swap(a, b);
        if (b > c) std::swap(b, c);
        if (a > b) std::swap(a, b);
        if (a == b || b == c) continue;
        const SeriesIntegrator integ(s);
        const double ac = integ.integrate(a, c).energy.joules;
        const double ab = integ.integrate(a, b).energy.joules;
        const double bc = integ.integrate(b, c).energy.joules;
        CHECK(ab >= 0.0);
        CHECK(bc >= 0.0);
        CHECK(std::abs(ac - (ab + bc)) <= 1e-9 * std::max(1.0, ac));
        CHECK(ac >= ab);
        CHECK(ac >= bc);
        CHECK(integ.integrate(0, last).energy.joules >= ac);
    }
}

TEST_CASE("unsafe gaps are flagged, not hidden") {
    auto s = constant_series(100.0, 1'000'000'000, 10);
    SUBCASE("gap marker inside the window") {
        s.gap_markers.push_back(4'500'000'000);
        CHECK(integrate_window(s, 4'000'000'000, 5'000'000'000).unsafe_gap);
        CHECK_FALSE(integrate_window(s, 0, 3'000'000'000).unsafe_gap);
    }
    SUBCASE("sampling gap above half the wrap horizon") {
        CounterSpec spec;
        spec.bit_width = 32;  // ~4295 J modulus; at 1000 W wraps in ~4.3 s
        s = constant_series(100.0, 1'000'000'000, 10, spec);
        s.max_power_watts = 1000.0;
        CHECK(s.wrap_horizon_ns().value() == doctest::Approx(4.294967296e9).epsilon(1e-9));
        s.samples.erase(s.samples.begin() + 3, s.samples.begin() + 6);  // 3 s gap > 2.15 s
        CHECK(integrate_window(s, 2'000'000'000, 6'000'000'000).unsafe_gap);
        CHECK_FALSE(integrate_window(s, 6'000'000'000, 9'000'000'000).unsafe_gap);
    }
}

TEST_CASE("series validation") {
    auto s = constant_series(1.0, 1000, 3);
    s.samples[2].t_ns = s.samples[1].t_ns;
    CHECK(code_of([&] { s.validate(); }) == Errc::InvalidArgument);
    s = constant_series(1.0, 1000, 3);
    s.spec.bit_width = 4;
    s.samples[1].raw = 16;
    CHECK(code_of([&] { s.validate(); }) == Errc::InvalidArgument);
}
