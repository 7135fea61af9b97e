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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"
#include "wattflow/error.hpp"
#include "wattflow/sampler.hpp"

using namespace wattflow;
using wftest::code_of;
using wftest::TempDir;

namespace fs = std::filesystem;

namespace {

MockProfile constant_profile(double watts, double seconds, CounterSpec spec = {}) {
    MockProfile p;
    p.spec = spec;
    p.segments = {{seconds, watts}};
    return p;
}

struct MemorySink final : LogSink {
    std::string text;
    int fail_after = -1;  // appends allowed before failing; -1 never fails
    int appends = 0;

    void append(const std::string& line) override {
        if (fail_after >= 0 && appends >= fail_after) throw Error(Errc::SinkWrite, "disk full");
        ++appends;
        text += line;
    }
    void flush() override {}
};

/// Fails every read whose timestamp is listed.
struct FlakyBackend final : CounterBackend {
    MockBackend inner;
    std::vector<std::int64_t> bad_times;
    int attempts = 0;

    FlakyBackend(std::map<RaplDomain, MockProfile> p, std::vector<std::int64_t> bad)
        : inner(std::move(p), 0), bad_times(std::move(bad)) {}
    BackendKind kind() const noexcept override { return BackendKind::Mock; }
    RawSample read(const CounterSpec& d, std::int64_t now) override {
        ++attempts;
        if (std::find(bad_times.begin(), bad_times.end(), now) != bad_times.end()) {
            throw Error(Errc::Io, "transient");
        }
        return inner.read(d, now);
    }
};

SamplerConfig config_for(const CounterSpec& spec, std::int64_t interval_ms = 500) {
    SamplerConfig c;
    c.node_id = "node-1";
    c.interval_ms = interval_ms;
    c.domains = {spec};
    return c;
}

std::size_t count_records(const SessionLog& log, RaplDomain d) { return log.series.at(d).samples.size(); }

}  // namespace

TEST_CASE("mock backend readings") {
    MockBackend b({{RaplDomain::Package, constant_profile(100.0, 10.0)}}, 0);
    const CounterSpec spec;
    CHECK(read_backend(b, spec, 5'000'000'000).raw == 500'000'000);
    CHECK(read_backend(b, spec, 0).raw == 0);
    CHECK(read_backend(b, spec, 5'000'000'000).t_ns == 5'000'000'000);

    CounterSpec narrow;
    narrow.bit_width = 20;
    // 1.048583 W for 1 s is 2^20 + 7 microjoules.
    MockBackend n({{RaplDomain::Package, constant_profile(1.048583, 10.0, narrow)}}, 0);
    CHECK(read_backend(n, narrow, 1'000'000'000).raw == 7);

    CounterSpec dram;
    dram.domain = RaplDomain::Dram;
    CHECK(code_of([&] { read_backend(b, dram, 0); }) == Errc::DeviceAbsent);
}

TEST_CASE("mock counter first wraps where the closed form says") {
    CounterSpec narrow;
    narrow.bit_width = 20;
    narrow.update_period_s = 1e-6;
    const MockProfile p = constant_profile(100.0, 60.0, narrow);
    const double wrap_s = std::ldexp(1.0, 20) * 1e-6 / 100.0;  // 10.49 ms
    CHECK(p.raw_at(wrap_s - 1e-3) > p.raw_at(wrap_s - 2e-3));
    CHECK(p.raw_at(wrap_s + 1e-3) < p.raw_at(wrap_s - 1e-3));
}

TEST_CASE("mock profile holds its last level and validates") {
    MockProfile p;
    p.segments = {{2.0, 10.0}, {3.0, 20.0}};
    CHECK(p.cumulative_joules(1.0) == doctest::Approx(10.0));
    CHECK(p.cumulative_joules(5.0) == doctest::Approx(80.0));
    CHECK(p.cumulative_joules(7.0) == doctest::Approx(120.0));
    p.segments = {{0.0, 10.0}};
    CHECK(code_of([&] { p.validate(); }) == Errc::InvalidArgument);
    p.segments = {{1.0, -1.0}};
    CHECK(code_of([&] { p.validate(); }) == Errc::InvalidArgument);
    p.segments = {};
    CHECK(code_of([&] { p.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("zero power keeps the counter constant") {
    MockProfile p = constant_profile(0.0, 10.0);
    p.seed = 99;
    const auto r0 = p.raw_at(0.0);
    for (double t : {0.5, 3.0, 9.9, 20.0}) CHECK(p.raw_at(t) == r0);
}

TEST_CASE("sampling loop: tick count and final record") {
    const CounterSpec spec;
    const SamplerConfig cfg = config_for(spec);
    MockBackend b({{RaplDomain::Package, constant_profile(100.0, 60.0)}}, 0);
    MemorySink sink;
    ManualClock clock(0);
    const auto r = sampling_loop(cfg, b, sink, clock, [&] { return clock.now_ns() < 10'000'000'000; });
    const SessionLog log = parse_log_text(sink.text, "mem");
    const auto n = count_records(log, RaplDomain::Package);
    CHECK(n >= 20);
    CHECK(n <= 22);
    CHECK(log.status == LogStatus::Complete);
    CHECK(r.final_record_ns >= r.stop_detected_ns);
    CHECK(log.series.at(RaplDomain::Package).samples.back().t_ns == r.final_record_ns);
}

TEST_CASE("stop detected between ticks still gets a final record") {
    const SamplerConfig cfg = config_for(CounterSpec{}, 1000);
    MockBackend b({{RaplDomain::Package, constant_profile(50.0, 60.0)}}, 0);
    MemorySink sink;
    ManualClock clock(0);
    int polls = 0;
    const auto r = sampling_loop(cfg, b, sink, clock, [&] {
        if (++polls == 4) {
            clock.advance(300'000'000);  // stop noticed mid-interval
            return false;
        }
        return true;
    });
    CHECK(r.stop_detected_ns == 3'300'000'000);
    CHECK(r.final_record_ns >= r.stop_detected_ns);
    const auto log = parse_log_text(sink.text, "mem");
    CHECK(log.series.at(RaplDomain::Package).samples.back().t_ns == 3'300'000'000);
}

TEST_CASE("constant 100 W for 60 s logs 6000 J") {
    SamplerConfig cfg = config_for(CounterSpec{});
    CounterSpec dram;
    dram.domain = RaplDomain::Dram;
    cfg.domains.push_back(dram);
    MockProfile pkg = constant_profile(100.0, 60.0);
    pkg.seed = 3;
    MockProfile dr = constant_profile(20.0, 60.0, dram);
    dr.seed = 4;
    MockBackend b({{RaplDomain::Package, pkg}, {RaplDomain::Dram, dr}}, 0);
    MemorySink sink;
    ManualClock clock(0);
    sampling_loop(cfg, b, sink, clock, [&] { return clock.now_ns() < 60'000'000'000; });
    const auto log = parse_log_text(sink.text, "mem");
    const double pkg_j = series_total(log.series.at(RaplDomain::Package)).energy.joules;
    CHECK(std::abs(pkg_j - 6000.0) <= 0.005 * 6000.0);
    CHECK(series_total(log.series.at(RaplDomain::Dram)).energy.joules == doctest::Approx(1200.0).epsilon(0.005));
}

TEST_CASE("mock logs track multi-segment profiles within 1%") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 20; ++round) {
        MockProfile p;
        p.seed = rng();
        double span = 0.0;
        const int segs = 2 + static_cast<int>(rng() % 6);
        for (int i = 0; i < segs; ++i) {
            const double dur = 2.0 + static_cast<double>(rng() % 8000) / 1000.0;
            p.segments.push_back({dur, static_cast<double>(rng() % 300)});
            span += dur;
        }
        const std::int64_t interval_ms = 100 + static_cast<std::int64_t>(rng() % 900);
        MockBackend b({{RaplDomain::Package, p}}, 0);
        MemorySink sink;
        ManualClock clock(0);
        const auto span_ns = static_cast<std::int64_t>(span * 1e9);
        sampling_loop(config_for(p.spec, interval_ms), b, sink, clock, [&] { return clock.now_ns() < span_ns; });
        const auto log = parse_log_text(sink.text, "mem");
        const auto& s = log.series.at(RaplDomain::Package);
        const double truth = p.cumulative_joules(s.samples.back().t_ns * 1e-9);
        const double got = series_total(s).energy.joules;
        CHECK(std::abs(got - truth) <= 0.01 * std::max(truth, 1.0));
    }
}

TEST_CASE("failed reads are retried once, then logged as gaps") {
    const CounterSpec spec;
    FlakyBackend b({{RaplDomain::Package, constant_profile(10.0, 60.0)}}, {1'000'000'000});
    MemorySink sink;
    SessionRecorder rec(config_for(spec), b, sink, 0);
    rec.open();
    rec.tick(0);
    rec.tick(500'000'000);
    rec.tick(1'000'000'000);
    rec.tick(1'500'000'000);
    rec.close(2'000'000'000, LogStatus::Complete);
    CHECK(rec.gaps_written() == 1);
    CHECK(rec.records_written() == 4);
    CHECK(b.attempts == 6);
    CHECK(sink.text.find("1000000000,package,gap\n") != std::string::npos);
    const auto log = parse_log_text(sink.text, "mem");
    CHECK(log.series.at(RaplDomain::Package).gap_markers == std::vector<std::int64_t>{1'000'000'000});
    CHECK(integrate_window(log.series.at(RaplDomain::Package), 500'000'000, 1'500'000'000).unsafe_gap);
}

TEST_CASE("a sink failure truncates the session") {
    const CounterSpec spec;
    MockBackend b({{RaplDomain::Package, constant_profile(10.0, 60.0)}}, 0);
    MemorySink sink;
    sink.fail_after = 3;  // header + two ticks
    ManualClock clock(0);
    const auto r = sampling_loop(config_for(spec), b, sink, clock, [&] { return clock.now_ns() < 10'000'000'000; });
    CHECK(r.status == LogStatus::Truncated);
    CHECK(r.ticks == 3);
}

TEST_CASE("repeated ticks at one instant write one record") {
    const CounterSpec spec;
    MockBackend b({{RaplDomain::Package, constant_profile(10.0, 60.0)}}, 0);
    MemorySink sink;
    SessionRecorder rec(config_for(spec), b, sink, 0);
    rec.open();
    rec.tick(100);
    rec.tick(100);
    rec.close(100, LogStatus::Reaped);
    CHECK(rec.records_written() == 1);
    const auto log = parse_log_text(sink.text, "mem");
    CHECK(log.status == LogStatus::Reaped);
}

TEST_CASE("log lines and headers") {
    CHECK(write_log_line({123, 456}, RaplDomain::Dram) == "123,dram,456\n");
    CHECK(write_gap_line(7, RaplDomain::Psys) == "7,psys,gap\n");
    CounterSpec spec;
    spec.bit_width = 38;
    spec.energy_unit_joules = std::ldexp(1.0, -14);
    const std::string h = format_header({"n1", spec, 42});
    CHECK(h.rfind("#wattflow-v1 node=n1 domain=package bit_width=38 unit_j=", 0) == 0);
    CHECK(h.find(" epoch_wall_ns=42\n") != std::string::npos);
    CHECK(log_path("/logs", "n1", "s9") == fs::path("/logs/rapl_n1_s9.csv"));
}

TEST_CASE("log round trip is exact") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 100; ++round) {
        SessionLog log;
        log.node_id = "node-" + std::to_string(round);
        log.status = static_cast<LogStatus>(rng() % 4);
        for (RaplDomain d : {RaplDomain::Package, RaplDomain::Dram, RaplDomain::Psys}) {
            if (rng() % 3 == 0) continue;
            SampleSeries s;
            s.node_id = log.node_id;
            s.spec.domain = d;
            s.spec.bit_width = 1 + static_cast<int>(rng() % 64);
            s.spec.energy_unit_joules = std::ldexp(1.0, -static_cast<int>(rng() % 20)) * (1.0 + (rng() % 1000) * 1e-7);
            if (rng() % 4 == 0) s.spec.modulus_override = 2 + rng() % 1'000'000'000'000ULL;
            s.epoch_wall_ns = static_cast<std::int64_t>(rng() >> 2);
            std::int64_t t = static_cast<std::int64_t>(rng() % 1000);
            for (int i = 0; i < 30; ++i) {
                t += 1 + static_cast<std::int64_t>(rng() % 1'000'000'000);
                if (rng() % 10 == 0) {
                    s.gap_markers.push_back(t);
                } else {
                    s.samples.push_back({t, rng() % (s.spec.max_raw() == ~0ULL ? ~0ULL : s.spec.max_raw() + 1)});
                }
            }
            log.series.emplace(d, std::move(s));
        }
        if (log.series.empty()) continue;
        const SessionLog back = parse_log_text(format_log(log), "rt");
        CHECK(back.node_id == log.node_id);
        CHECK(back.status == log.status);
        REQUIRE(back.series.size() == log.series.size());
        for (const auto& [d, s] : log.series) CHECK(back.series.at(d) == s);
    }
}

TEST_CASE("shuffled lines are rejected") {
    SessionLog log;
    log.node_id = "n";
    SampleSeries s;
    s.node_id = "n";
    for (int i = 0; i < 20; ++i) s.samples.push_back({i * 1000, static_cast<std::uint64_t>(i * 7)});
    log.series.emplace(RaplDomain::Package, s);
    std::istringstream in(format_log(log));
    std::string header, line;
    std::getline(in, header);
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    std::mt19937 rng(1);
    std::shuffle(lines.begin(), lines.end(), rng);
    std::string text = header + "\n";
    for (const auto& l : lines) text += l + "\n";
    try {
        parse_log_text(text, "shuffled.csv");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ParseError);
        CHECK(std::string(e.what()).find("non-monotonic timestamp") != std::string::npos);
        CHECK(std::string(e.what()).find("shuffled.csv:") != std::string::npos);
    }
}

TEST_CASE("malformed logs") {
    const std::string h = "#wattflow-v1 node=n domain=package bit_width=32 unit_j=1e-06 epoch_wall_ns=0\n";
    CHECK(code_of([] { parse_log_text("0,package,5\n", "x"); }) == Errc::HeaderMismatch);
    CHECK(code_of([] { parse_log_text("", "x"); }) == Errc::HeaderMismatch);
    CHECK(code_of([&] { parse_log_text(h + "0,dram,5\n", "x"); }) == Errc::HeaderMismatch);
    CHECK(code_of([&] { parse_log_text(h + "0,package\n", "x"); }) == Errc::ParseError);
    CHECK(code_of([&] { parse_log_text(h + "0,package,abc\n", "x"); }) == Errc::ParseError);
    CHECK(code_of([&] { parse_log_text(h + "0,package,4294967296\n", "x"); }) == Errc::ParseError);
    CHECK(code_of([&] { parse_log_text(h + "#status=weird\n", "x"); }) == Errc::ParseError);
    CHECK(code_of([&] { parse_log_text(h + h, "x"); }) == Errc::HeaderMismatch);
    CHECK(code_of([] { parse_log_text("#wattflow-v1 node=n domain=package\n", "x"); }) == Errc::HeaderMismatch);
    try {
        parse_log_text(h + "0,package,1\n5,package,x\n", "bad.csv");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
    CHECK(code_of([] { parse_log("/nonexistent/rapl_x_y.csv"); }) == Errc::NotFound);
}

TEST_CASE("fixture with one gap marker yields an unsafe window") {
    const auto log = parse_log(fs::path(WATTFLOW_FIXTURES) / "rapl_gap-node_fixture.csv");
    CHECK(log.status == LogStatus::Complete);
    const auto& s = log.series.at(RaplDomain::Package);
    CHECK(s.gap_markers.size() == 1);
    const auto all = series_total(s);
    CHECK(all.unsafe_gap);
    CHECK(all.energy.joules == doctest::Approx(250.0));
    CHECK_FALSE(integrate_window(s, 0, 1'000'000'000).unsafe_gap);
}

TEST_CASE("powercap backend") {
    TempDir dir("powercap");
    const fs::path zone = dir.path / "intel-rapl:0";
    fs::create_directories(zone);
    std::ofstream(zone / "max_energy_range_uj") << "262143328850\n";
    std::ofstream(zone / "energy_uj") << "262143328000\n";
    PowercapBackend b({{RaplDomain::Package, DomainSource{zone}}});
    const CounterSpec spec = b.spec_for(RaplDomain::Package);
    CHECK(spec.modulus_override == 262143328851ULL);
    CHECK(spec.energy_unit_joules == 1e-6);
    const auto r1 = read_backend(b, spec, 1);
    std::ofstream(zone / "energy_uj", std::ios::trunc) << "149\n";
    const auto r2 = read_backend(b, spec, 2);
    CHECK(r1.raw == 262143328000ULL);
    CHECK(raw_delta(r1.raw, r2.raw, spec) == 1000);

    CounterSpec wrong = spec;
    wrong.energy_unit_joules = 2e-6;
    CHECK(code_of([&] { read_backend(b, wrong, 3); }) == Errc::InvalidArgument);
    std::ofstream(zone / "energy_uj", std::ios::trunc) << "garbage\n";
    CHECK(code_of([&] { read_backend(b, spec, 4); }) == Errc::ParseError);
    fs::remove(zone / "energy_uj");
    CHECK(code_of([&] { read_backend(b, spec, 5); }) == Errc::DeviceAbsent);
    CHECK(code_of([&] { PowercapBackend({{RaplDomain::Dram, DomainSource{dir.path / "missing"}}}); }) ==
          Errc::DeviceAbsent);
}

TEST_CASE("msr backend reads registers from a device file") {
    TempDir dir("msr");
    const fs::path dev = dir.path / "msr";
    {
        std::ofstream f(dev, std::ios::binary);
        const auto put = [&](std::uint32_t reg, std::uint64_t v) {
            f.seekp(reg);
            f.write(reinterpret_cast<const char*>(&v), sizeof v);
        };
        put(0x606, 0x000A0E03);            // ESU = 14
        put(0x611, 0xFFFFFFFF00001234ULL);  // upper bits reserved
        put(0x619, 77);
    }
    CHECK(MsrBackend::energy_unit(dev) == std::ldexp(1.0, -14));
    MsrBackend b({{RaplDomain::Package, DomainSource{dev}}, {RaplDomain::Dram, DomainSource{dev}}});
    CounterSpec pkg;
    CHECK(read_backend(b, pkg, 0).raw == 0x1234);
    CounterSpec dram;
    dram.domain = RaplDomain::Dram;
    CHECK(read_backend(b, dram, 0).raw == 77);
    CounterSpec psys;
    psys.domain = RaplDomain::Psys;
    CHECK(code_of([&] { read_backend(b, psys, 0); }) == Errc::DeviceAbsent);
    CHECK(MsrBackend::register_for(RaplDomain::Core) == 0x639);
    MsrBackend missing({{RaplDomain::Package, DomainSource{dir.path / "nope"}}});
    CHECK(code_of([&] { read_backend(missing, pkg, 0); }) == Errc::DeviceAbsent);
}

TEST_CASE("sampler config validation and wrap warnings") {
    SamplerConfig c = config_for(CounterSpec{});
    CHECK_NOTHROW(c.validate());
    CHECK(c.warnings().empty());
    c.max_power_watts = 1000.0;  // 32-bit microjoule counter wraps in ~4.3 s
    c.interval_ms = 3000;
    CHECK(c.warnings().size() == 1);
    c.interval_ms = 500;
    CHECK(c.warnings().empty());
    c.interval_ms = 0;
    CHECK(code_of([&] { c.validate(); }) == Errc::InvalidArgument);
    c.interval_ms = 500;
    c.domains.clear();
    CHECK(code_of([&] { c.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("file sink appends") {
    TempDir dir("sink");
    const fs::path p = dir.path / "log.csv";
    {
        FileSink s(p);
        s.append("a\n");
        s.flush();
    }
    {
        FileSink s(p);
        s.append("b\n");
    }
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == "a\nb\n");
    CHECK(code_of([&] { FileSink bad(dir.path / "no" / "such" / "dir.csv"); }) == Errc::SinkWrite);
}
