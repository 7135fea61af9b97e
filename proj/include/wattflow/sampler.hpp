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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wattflow/counter.hpp"

namespace wattflow {

enum class BackendKind { PowercapFs, MsrDevice, Mock };

/// Piecewise-constant power used to synthesize a counter without hardware.
/// Beyond the last segment the last power level is held.
struct MockProfile {
    struct Segment {
        double duration_s = 0.0;
        double power_watts = 0.0;
    };
    std::vector<Segment> segments;
    CounterSpec spec;
    /// Non-zero seeds start the counter at a pseudo-random offset.
    std::uint64_t seed = 0;

    void validate() const;
    double total_duration_s() const;
    /// Exact cumulative energy after `t_s` seconds.
    double cumulative_joules(double t_s) const;
    /// Counter value the hardware would show after `t_s` seconds.
    std::uint64_t raw_at(double t_s) const;
    std::uint64_t initial_offset() const;
};

/// Where a real backend finds a domain's counter.
struct DomainSource {
    /// PowercapFs: zone directory holding `energy_uj` and `max_energy_range_uj`.
    /// MsrDevice: the msr device file, e.g. /dev/cpu/0/msr.
    std::filesystem::path path;
};

class CounterBackend {
public:
    virtual ~CounterBackend() = default;
    virtual BackendKind kind() const noexcept = 0;
    /// Reads the domain's counter; `now_ns` is stamped onto the sample.
    virtual RawSample read(const CounterSpec& domain, std::int64_t now_ns) = 0;
};

/// Mock counters: time zero of the profile is `origin_ns` on the caller's clock.
class MockBackend final : public CounterBackend {
public:
    MockBackend(std::map<RaplDomain, MockProfile> profiles, std::int64_t origin_ns);
    BackendKind kind() const noexcept override { return BackendKind::Mock; }
    RawSample read(const CounterSpec& domain, std::int64_t now_ns) override;

private:
    std::map<RaplDomain, MockProfile> profiles_;
    std::int64_t origin_ns_;
};

/// Linux powercap sysfs. Values are microjoules; the wrap modulus comes from
/// `max_energy_range_uj`, read once at construction.
class PowercapBackend final : public CounterBackend {
public:
    explicit PowercapBackend(std::map<RaplDomain, DomainSource> sources);
    BackendKind kind() const noexcept override { return BackendKind::PowercapFs; }
    RawSample read(const CounterSpec& domain, std::int64_t now_ns) override;

    /// Spec matching what the zone advertises (unit 1e-6, modulus = range + 1).
    CounterSpec spec_for(RaplDomain d) const;

private:
    std::map<RaplDomain, DomainSource> sources_;
    std::map<RaplDomain, std::uint64_t> max_range_;
};

/// Raw MSR reads through the msr device file. Values are returned unscaled.
class MsrBackend final : public CounterBackend {
public:
    explicit MsrBackend(std::map<RaplDomain, DomainSource> sources);
    BackendKind kind() const noexcept override { return BackendKind::MsrDevice; }
    RawSample read(const CounterSpec& domain, std::int64_t now_ns) override;

    /// Joules per count from MSR_RAPL_POWER_UNIT of the device at `path`.
    static double energy_unit(const std::filesystem::path& device);
    static std::uint32_t register_for(RaplDomain d);

private:
    std::map<RaplDomain, DomainSource> sources_;
};

RawSample read_backend(CounterBackend& backend, const CounterSpec& domain, std::int64_t now_ns);

// ---------------------------------------------------------------------------
// Log files

/// Header fields of one domain block.
struct LogHeader {
    std::string node_id;
    CounterSpec spec;
    std::int64_t epoch_wall_ns = 0;
};

enum class LogStatus { Complete, Open, Truncated, Reaped };

struct SessionLog {
    std::string node_id;
    std::map<RaplDomain, SampleSeries> series;
    LogStatus status = LogStatus::Open;
};

std::string format_header(const LogHeader& header);
std::string write_log_line(const RawSample& record, RaplDomain domain);
std::string write_gap_line(std::int64_t t_ns, RaplDomain domain);
std::filesystem::path log_path(const std::filesystem::path& log_dir, const std::string& node_id,
                               const std::string& session_id);

/// Parses one node×session log. `max_power_watts`, when given, is attached to
/// every series so gaps can be judged against the wrap-safety horizon.
SessionLog parse_log(const std::filesystem::path& path,
                     std::optional<double> max_power_watts = std::nullopt);
SessionLog parse_log_text(const std::string& text, const std::string& source_name,
                          std::optional<double> max_power_watts = std::nullopt);

/// Serializes a full log (headers, interleaved records by time, status line).
std::string format_log(const SessionLog& log);

// ---------------------------------------------------------------------------
// Sampling

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ns() = 0;
    virtual void sleep_until(std::int64_t t_ns) = 0;
    /// Wall time minus monotonic time, used as the log header anchor.
    virtual std::int64_t wall_offset_ns() = 0;
};

class SteadyClock final : public Clock {
public:
    std::int64_t now_ns() override;
    void sleep_until(std::int64_t t_ns) override;
    std::int64_t wall_offset_ns() override;
};

/// Deterministic clock for tests: sleeping advances time instantly.
class ManualClock final : public Clock {
public:
    explicit ManualClock(std::int64_t start_ns = 0, std::int64_t wall_offset_ns = 0)
        : now_(start_ns), wall_offset_(wall_offset_ns) {}
    std::int64_t now_ns() override { return now_; }
    void sleep_until(std::int64_t t_ns) override {
        if (t_ns > now_) now_ = t_ns;
    }
    std::int64_t wall_offset_ns() override { return wall_offset_; }
    void advance(std::int64_t d_ns) { now_ += d_ns; }

private:
    std::int64_t now_;
    std::int64_t wall_offset_;
};

struct SamplerConfig {
    std::string node_id;
    std::int64_t interval_ms = 500;
    std::vector<CounterSpec> domains;
    std::filesystem::path log_dir;
    std::filesystem::path signal_dir;
    /// Bound used for the wrap-safety check; absent disables it.
    std::optional<double> max_power_watts;

    void validate() const;
    /// Non-empty when interval_ms exceeds half of the tightest wrap horizon.
    std::vector<std::string> warnings() const;
};

/// Append-only writer for one session log.
class LogSink {
public:
    virtual ~LogSink() = default;
    virtual void append(const std::string& line) = 0;
    virtual void flush() = 0;
};

class FileSink final : public LogSink {
public:
    explicit FileSink(const std::filesystem::path& path);
    ~FileSink() override;
    FileSink(const FileSink&) = delete;
    FileSink& operator=(const FileSink&) = delete;
    void append(const std::string& line) override;
    void flush() override;

private:
    std::FILE* file_;
    std::filesystem::path path_;
};

/// Samples every configured domain once per tick into one session log.
/// Read failures are retried once, then written as gap markers.
class SessionRecorder {
public:
    SessionRecorder(const SamplerConfig& config, CounterBackend& backend, LogSink& sink,
                    std::int64_t wall_offset_ns);

    /// Writes the domain headers. Must precede the first tick.
    void open();
    /// No-op unless `now_ns` is later than the previous tick.
    void tick(std::int64_t now_ns);
    /// Writes the final record and a status trailer.
    void close(std::int64_t now_ns, LogStatus status);

    std::size_t records_written() const noexcept { return records_; }
    std::size_t gaps_written() const noexcept { return gaps_; }
    bool truncated() const noexcept { return truncated_; }
    std::optional<std::int64_t> first_record_ns() const noexcept { return first_ns_; }

private:
    void write(const std::string& line);

    SamplerConfig config_;
    CounterBackend& backend_;
    LogSink& sink_;
    std::int64_t wall_offset_ns_;
    std::size_t records_ = 0;
    std::size_t gaps_ = 0;
    bool truncated_ = false;
    bool closed_ = false;
    std::optional<std::int64_t> first_ns_;
    std::optional<std::int64_t> last_ns_;
};

struct LoopResult {
    std::size_t ticks = 0;
    LogStatus status = LogStatus::Complete;
    std::int64_t stop_detected_ns = 0;
    std::int64_t final_record_ns = 0;
};

/// Runs one session until `active()` returns false, then writes a final record.
/// A sink failure ends the session as truncated.
LoopResult sampling_loop(const SamplerConfig& config, CounterBackend& backend, LogSink& sink,
                         Clock& clock, const std::function<bool()>& active);

}  // namespace wattflow
