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

#include "wattflow/sampler.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "wattflow/error.hpp"

namespace wattflow {

namespace fs = std::filesystem;

namespace {

std::string errno_text(int err) { return std::strerror(err); }

[[noreturn]] void throw_open_error(const fs::path& path, int err) {
    if (err == EACCES || err == EPERM) {
        throw Error(Errc::PermissionDenied,
                    path.string() + " (reading energy counters usually requires root)");
    }
    if (err == ENOENT || err == ENODEV || err == ENXIO) {
        throw Error(Errc::DeviceAbsent, path.string());
    }
    throw Error(Errc::Io, path.string() + ": " + errno_text(err));
}

std::uint64_t read_u64_file(const fs::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw_open_error(path, errno);
    char buf[64];
    const ssize_t n = ::read(fd, buf, sizeof(buf) - 1);
    const int err = errno;
    ::close(fd);
    if (n < 0) throw_open_error(path, err);
    std::string_view text(buf, static_cast<std::size_t>(n));
    while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.remove_suffix(1);
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(Errc::ParseError, path.string() + ": not an unsigned integer: '" +
                                          std::string(text) + "'");
    }
    return value;
}

std::uint64_t read_msr(const fs::path& device, std::uint32_t reg) {
    const int fd = ::open(device.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw_open_error(device, errno);
    std::uint64_t value = 0;
    const ssize_t n = ::pread(fd, &value, sizeof(value), static_cast<off_t>(reg));
    const int err = errno;
    ::close(fd);
    if (n < 0) throw_open_error(device, err);
    if (n != sizeof(value)) {
        throw Error(Errc::ParseError, device.string() + ": short read of MSR " + std::to_string(reg));
    }
    return value;
}

template <typename T>
T parse_number(std::string_view text, std::string_view what, const std::string& where) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(Errc::ParseError,
                    where + ": bad " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

double parse_real(std::string_view text, std::string_view what, const std::string& where) {
    // from_chars for double is unavailable on older libstdc++; strtod on a copy.
    const std::string copy(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(copy.c_str(), &end);
    if (copy.empty() || end != copy.c_str() + copy.size() || errno == ERANGE) {
        throw Error(Errc::ParseError, where + ": bad " + std::string(what) + " '" + copy + "'");
    }
    return v;
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* status_name(LogStatus s) {
    switch (s) {
        case LogStatus::Complete: return "complete";
        case LogStatus::Open: return "open";
        case LogStatus::Truncated: return "truncated";
        case LogStatus::Reaped: return "reaped";
    }
    return "open";
}

}  // namespace

// ---------------------------------------------------------------------------
// MockProfile

void MockProfile::validate() const {
    spec.validate();
    if (segments.empty()) throw Error(Errc::InvalidArgument, "mock profile has no segments");
    for (const auto& s : segments) {
        if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) {
            throw Error(Errc::InvalidArgument, "mock segment duration must be positive");
        }
        if (!(s.power_watts >= 0.0) || !std::isfinite(s.power_watts)) {
            throw Error(Errc::InvalidArgument, "mock segment power must be non-negative");
        }
    }
}

double MockProfile::total_duration_s() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration_s;
    return t;
}

double MockProfile::cumulative_joules(double t_s) const {
    if (t_s <= 0.0 || segments.empty()) return 0.0;
    double acc = 0.0;
    double t0 = 0.0;
    for (const auto& s : segments) {
        if (t_s <= t0 + s.duration_s) return acc + s.power_watts * (t_s - t0);
        acc += s.power_watts * s.duration_s;
        t0 += s.duration_s;
    }
    return acc + segments.back().power_watts * (t_s - t0);
}

std::uint64_t MockProfile::initial_offset() const {
    if (seed == 0) return 0;
    std::mt19937_64 rng(seed);
    const std::uint64_t r = rng();
    return spec.max_raw() == std::numeric_limits<std::uint64_t>::max() ? r
                                                                        : r % (spec.max_raw() + 1);
}

std::uint64_t MockProfile::raw_at(double t_s) const {
    // The hardware only refreshes the counter once per update period.
    const double ticks = std::floor(t_s / spec.update_period_s + 1e-9);
    const double t_q = std::max(0.0, ticks * spec.update_period_s);
    const long double counts_real =
        static_cast<long double>(cumulative_joules(t_q)) / spec.energy_unit_joules;
    // Nudge by a fraction of a count so exact products are not floored away by
    // the decimal representation of the unit.
    const long double counts = std::floor(counts_real + 1e-6L);
    const long double modulus = spec.modulus();
    const long double wrapped = std::fmod(counts + static_cast<long double>(initial_offset()), modulus);
    return static_cast<std::uint64_t>(wrapped);
}

// ---------------------------------------------------------------------------
// Backends

MockBackend::MockBackend(std::map<RaplDomain, MockProfile> profiles, std::int64_t origin_ns)
    : profiles_(std::move(profiles)), origin_ns_(origin_ns) {
    for (const auto& [d, p] : profiles_) p.validate();
}

RawSample MockBackend::read(const CounterSpec& domain, std::int64_t now_ns) {
    auto it = profiles_.find(domain.domain);
    if (it == profiles_.end()) {
        throw Error(Errc::DeviceAbsent,
                    "mock backend has no profile for domain " + std::string(to_string(domain.domain)));
    }
    const double t_s = static_cast<double>(now_ns - origin_ns_) * 1e-9;
    return RawSample{now_ns, it->second.raw_at(t_s)};
}

PowercapBackend::PowercapBackend(std::map<RaplDomain, DomainSource> sources)
    : sources_(std::move(sources)) {
    for (const auto& [d, src] : sources_) {
        max_range_[d] = read_u64_file(src.path / "max_energy_range_uj");
    }
}

CounterSpec PowercapBackend::spec_for(RaplDomain d) const {
    auto it = max_range_.find(d);
    if (it == max_range_.end()) {
        throw Error(Errc::DeviceAbsent, "no powercap zone for domain " + std::string(to_string(d)));
    }
    CounterSpec spec;
    spec.domain = d;
    spec.energy_unit_joules = 1e-6;
    spec.modulus_override = it->second + 1;
    spec.bit_width = static_cast<int>(std::min<std::uint64_t>(
        64, static_cast<std::uint64_t>(std::ceil(std::log2(static_cast<double>(it->second) + 1.0)))));
    return spec;
}

RawSample PowercapBackend::read(const CounterSpec& domain, std::int64_t now_ns) {
    auto it = sources_.find(domain.domain);
    if (it == sources_.end()) {
        throw Error(Errc::DeviceAbsent,
                    "no powercap zone for domain " + std::string(to_string(domain.domain)));
    }
    if (domain.energy_unit_joules != 1e-6) {
        throw Error(Errc::InvalidArgument, "powercap values are microjoules; unit must be 1e-6");
    }
    const std::uint64_t v = read_u64_file(it->second.path / "energy_uj");
    if (v > domain.max_raw()) {
        throw Error(Errc::ParseError, "powercap value exceeds advertised range");
    }
    return RawSample{now_ns, v};
}

MsrBackend::MsrBackend(std::map<RaplDomain, DomainSource> sources) : sources_(std::move(sources)) {}

std::uint32_t MsrBackend::register_for(RaplDomain d) {
    switch (d) {
        case RaplDomain::Package: return 0x611;
        case RaplDomain::Core: return 0x639;
        case RaplDomain::Graphics: return 0x641;
        case RaplDomain::Dram: return 0x619;
        case RaplDomain::Psys: return 0x64D;
    }
    return 0x611;
}

double MsrBackend::energy_unit(const fs::path& device) {
    const std::uint64_t units = read_msr(device, 0x606);
    const unsigned esu = static_cast<unsigned>((units >> 8) & 0x1F);
    return std::ldexp(1.0, -static_cast<int>(esu));
}

RawSample MsrBackend::read(const CounterSpec& domain, std::int64_t now_ns) {
    auto it = sources_.find(domain.domain);
    if (it == sources_.end()) {
        throw Error(Errc::DeviceAbsent,
                    "no msr device for domain " + std::string(to_string(domain.domain)));
    }
    const std::uint64_t v = read_msr(it->second.path, register_for(domain.domain));
    return RawSample{now_ns, v & domain.max_raw()};
}

RawSample read_backend(CounterBackend& backend, const CounterSpec& domain, std::int64_t now_ns) {
    domain.validate();
    return backend.read(domain, now_ns);
}

// ---------------------------------------------------------------------------
// Log format

std::string format_header(const LogHeader& h) {
    std::string line = "#wattflow-v1 node=" + h.node_id +
                       " domain=" + std::string(to_string(h.spec.domain)) +
                       " bit_width=" + std::to_string(h.spec.bit_width) +
                       " unit_j=" + format_real(h.spec.energy_unit_joules) +
                       " epoch_wall_ns=" + std::to_string(h.epoch_wall_ns);
    if (h.spec.modulus_override) line += " modulus=" + std::to_string(*h.spec.modulus_override);
    return line + "\n";
}

std::string write_log_line(const RawSample& record, RaplDomain domain) {
    return std::to_string(record.t_ns) + "," + std::string(to_string(domain)) + "," +
           std::to_string(record.raw) + "\n";
}

std::string write_gap_line(std::int64_t t_ns, RaplDomain domain) {
    return std::to_string(t_ns) + "," + std::string(to_string(domain)) + ",gap\n";
}

fs::path log_path(const fs::path& log_dir, const std::string& node_id,
                  const std::string& session_id) {
    return log_dir / ("rapl_" + node_id + "_" + session_id + ".csv");
}

namespace {

LogHeader parse_header_line(std::string_view line, const std::string& where) {
    std::istringstream in{std::string(line)};
    std::string tok;
    in >> tok;
    if (tok != "#wattflow-v1") throw Error(Errc::HeaderMismatch, where + ": unknown header tag");
    std::map<std::string, std::string> kv;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw Error(Errc::ParseError, where + ": bad header field '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    for (const char* key : {"node", "domain", "bit_width", "unit_j", "epoch_wall_ns"}) {
        if (!kv.count(key)) throw Error(Errc::HeaderMismatch, where + ": header lacks " + key);
    }
    LogHeader h;
    h.node_id = kv["node"];
    const auto d = parse_domain(kv["domain"]);
    if (!d) throw Error(Errc::ParseError, where + ": unknown domain '" + kv["domain"] + "'");
    h.spec.domain = *d;
    h.spec.bit_width = parse_number<int>(kv["bit_width"], "bit_width", where);
    h.spec.energy_unit_joules = parse_real(kv["unit_j"], "unit_j", where);
    h.epoch_wall_ns = parse_number<std::int64_t>(kv["epoch_wall_ns"], "epoch_wall_ns", where);
    if (kv.count("modulus")) {
        h.spec.modulus_override = parse_number<std::uint64_t>(kv["modulus"], "modulus", where);
    }
    try {
        h.spec.validate();
    } catch (const Error& e) {
        throw Error(Errc::HeaderMismatch, where + ": " + e.what());
    }
    return h;
}

}  // namespace

SessionLog parse_log_text(const std::string& text, const std::string& source_name,
                          std::optional<double> max_power_watts) {
    SessionLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool have_node = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source_name + ":" + std::to_string(lineno);
        if (line.empty()) continue;
        if (line.rfind("#wattflow-v1", 0) == 0) {
            LogHeader h = parse_header_line(line, where);
            if (have_node && h.node_id != log.node_id) {
                throw Error(Errc::HeaderMismatch, where + ": node '" + h.node_id +
                                                      "' differs from '" + log.node_id + "'");
            }
            if (log.series.count(h.spec.domain)) {
                throw Error(Errc::HeaderMismatch, where + ": duplicate header for domain " +
                                                      std::string(to_string(h.spec.domain)));
            }
            log.node_id = h.node_id;
            have_node = true;
            SampleSeries s;
            s.node_id = h.node_id;
            s.spec = h.spec;
            s.epoch_wall_ns = h.epoch_wall_ns;
            s.max_power_watts = max_power_watts;
            log.series.emplace(h.spec.domain, std::move(s));
            continue;
        }
        if (line.rfind("#status=", 0) == 0) {
            const std::string st = line.substr(8);
            if (st == "complete") log.status = LogStatus::Complete;
            else if (st == "truncated") log.status = LogStatus::Truncated;
            else if (st == "reaped") log.status = LogStatus::Reaped;
            else if (st == "open") log.status = LogStatus::Open;
            else throw Error(Errc::ParseError, where + ": unknown status '" + st + "'");
            continue;
        }
        if (line[0] == '#') continue;

        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
            throw Error(Errc::ParseError, where + ": expected t_ns,domain,raw");
        }
        const std::string_view sv(line);
        const auto t_ns = parse_number<std::int64_t>(sv.substr(0, c1), "t_ns", where);
        const auto dname = sv.substr(c1 + 1, c2 - c1 - 1);
        const auto value = sv.substr(c2 + 1);
        const auto d = parse_domain(dname);
        if (!d) throw Error(Errc::ParseError, where + ": unknown domain '" + std::string(dname) + "'");
        auto it = log.series.find(*d);
        if (it == log.series.end()) {
            throw Error(Errc::HeaderMismatch,
                        where + ": record for domain without header: " + std::string(dname));
        }
        SampleSeries& s = it->second;
        const std::int64_t last_t = s.samples.empty() ? INT64_MIN : s.samples.back().t_ns;
        const std::int64_t last_gap = s.gap_markers.empty() ? INT64_MIN : s.gap_markers.back();
        if (t_ns <= std::max(last_t, last_gap)) {
            throw Error(Errc::ParseError, where + ": non-monotonic timestamp");
        }
        if (value == "gap") {
            s.gap_markers.push_back(t_ns);
            continue;
        }
        const auto raw = parse_number<std::uint64_t>(value, "raw", where);
        if (raw > s.spec.max_raw()) {
            throw Error(Errc::ParseError, where + ": raw value exceeds counter range");
        }
        s.samples.push_back(RawSample{t_ns, raw});
    }
    if (!have_node) throw Error(Errc::HeaderMismatch, source_name + ": no header line");
    return log;
}

SessionLog parse_log(const fs::path& path, std::optional<double> max_power_watts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (!fs::exists(path)) throw Error(Errc::NotFound, path.string());
        throw Error(Errc::Io, "cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_log_text(buf.str(), path.string(), max_power_watts);
}

std::string format_log(const SessionLog& log) {
    struct Entry {
        std::int64_t t;
        int domain;
        bool gap;
        std::uint64_t raw;
    };
    std::string out;
    std::vector<Entry> entries;
    for (const auto& [d, s] : log.series) {
        out += format_header(LogHeader{log.node_id, s.spec, s.epoch_wall_ns});
        for (const auto& r : s.samples) entries.push_back({r.t_ns, static_cast<int>(d), false, r.raw});
        for (auto g : s.gap_markers) entries.push_back({g, static_cast<int>(d), true, 0});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.t != b.t ? a.t < b.t : a.domain < b.domain;
    });
    for (const auto& e : entries) {
        const auto d = static_cast<RaplDomain>(e.domain);
        out += e.gap ? write_gap_line(e.t, d) : write_log_line(RawSample{e.t, e.raw}, d);
    }
    if (log.status != LogStatus::Open) out += std::string("#status=") + status_name(log.status) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Clocks and sinks

std::int64_t SteadyClock::now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void SteadyClock::sleep_until(std::int64_t t_ns) {
    std::this_thread::sleep_until(std::chrono::steady_clock::time_point(std::chrono::nanoseconds(t_ns)));
}

std::int64_t SteadyClock::wall_offset_ns() {
    const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
    return wall - now_ns();
}

void SamplerConfig::validate() const {
    if (node_id.empty()) throw Error(Errc::InvalidArgument, "sampler node_id is empty");
    if (interval_ms <= 0) throw Error(Errc::InvalidArgument, "interval_ms must be positive");
    if (domains.empty()) throw Error(Errc::InvalidArgument, "no domains configured");
    for (const auto& d : domains) d.validate();
}

std::vector<std::string> SamplerConfig::warnings() const {
    std::vector<std::string> out;
    for (const auto& d : domains) {
        SampleSeries probe;
        probe.spec = d;
        probe.max_power_watts = max_power_watts;
        const auto horizon = probe.wrap_horizon_ns();
        if (horizon && interval_ms * 1'000'000 > *horizon / 2) {
            out.push_back("interval " + std::to_string(interval_ms) + " ms exceeds half the wrap horizon of " +
                          std::string(to_string(d.domain)) + " (" + std::to_string(*horizon / 1'000'000) +
                          " ms); wraps may go undetected");
        }
    }
    return out;
}

FileSink::FileSink(const fs::path& path) : file_(std::fopen(path.c_str(), "a")), path_(path) {
    if (!file_) throw Error(Errc::SinkWrite, "cannot open " + path.string() + ": " + errno_text(errno));
}

FileSink::~FileSink() {
    if (file_) std::fclose(file_);
}

void FileSink::append(const std::string& line) {
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size()) {
        throw Error(Errc::SinkWrite, "write to " + path_.string() + " failed");
    }
}

void FileSink::flush() {
    if (std::fflush(file_) != 0) throw Error(Errc::SinkWrite, "flush of " + path_.string() + " failed");
}

// ---------------------------------------------------------------------------
// Recording

SessionRecorder::SessionRecorder(const SamplerConfig& config, CounterBackend& backend,
                                 LogSink& sink, std::int64_t wall_offset_ns)
    : config_(config), backend_(backend), sink_(sink), wall_offset_ns_(wall_offset_ns) {
    config_.validate();
}

void SessionRecorder::write(const std::string& line) {
    if (truncated_) return;
    try {
        sink_.append(line);
    } catch (const Error&) {
        truncated_ = true;
    }
}

void SessionRecorder::open() {
    std::string headers;
    for (const auto& d : config_.domains) {
        headers += format_header(LogHeader{config_.node_id, d, wall_offset_ns_});
    }
    write(headers);
    try {
        sink_.flush();
    } catch (const Error&) {
        truncated_ = true;
    }
}

void SessionRecorder::tick(std::int64_t now_ns) {
    if (closed_ || truncated_) return;
    if (last_ns_ && now_ns <= *last_ns_) return;
    last_ns_ = now_ns;
    std::string batch;
    for (const auto& d : config_.domains) {
        std::optional<RawSample> sample;
        for (int attempt = 0; attempt < 2 && !sample; ++attempt) {
            try {
                sample = read_backend(backend_, d, now_ns);
            } catch (const Error&) {
            }
        }
        if (sample) {
            batch += write_log_line(*sample, d.domain);
            ++records_;
        } else {
            batch += write_gap_line(now_ns, d.domain);
            ++gaps_;
        }
    }
    write(batch);
    try {
        if (!truncated_) sink_.flush();
    } catch (const Error&) {
        truncated_ = true;
    }
    if (!first_ns_ && !truncated_) first_ns_ = now_ns;
}

void SessionRecorder::close(std::int64_t now_ns, LogStatus status) {
    if (closed_) return;
    tick(now_ns);
    closed_ = true;
    if (truncated_) {
        // Best effort: the sink may accept the trailer even if a record failed.
        try {
            sink_.append("#status=truncated\n");
            sink_.flush();
        } catch (const Error&) {
        }
        return;
    }
    write(std::string("#status=") + status_name(status) + "\n");
    try {
        sink_.flush();
    } catch (const Error&) {
        truncated_ = true;
    }
}

LoopResult sampling_loop(const SamplerConfig& config, CounterBackend& backend, LogSink& sink,
                         Clock& clock, const std::function<bool()>& active) {
    SessionRecorder rec(config, backend, sink, clock.wall_offset_ns());
    rec.open();
    LoopResult result;
    const std::int64_t interval_ns = config.interval_ms * 1'000'000;
    std::int64_t next = clock.now_ns();
    while (!rec.truncated() && active()) {
        rec.tick(clock.now_ns());
        ++result.ticks;
        next += interval_ns;
        clock.sleep_until(next);
    }
    result.stop_detected_ns = clock.now_ns();
    result.final_record_ns = result.stop_detected_ns;
    rec.close(result.final_record_ns, LogStatus::Complete);
    result.status = rec.truncated() ? LogStatus::Truncated : LogStatus::Complete;
    return result;
}

}  // namespace wattflow
