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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wattflow/accounting.hpp"
#include "wattflow/error.hpp"
#include "wattflow/sampler.hpp"
#include "wattflow/signal.hpp"

namespace wattflow {

// ---------------------------------------------------------------------------
// Agent daemon

struct AgentConfig {
    SamplerConfig sampler;
    BackendKind backend = BackendKind::Mock;
    /// Mock: one profile per domain.
    std::map<RaplDomain, MockProfile> mock_profiles;
    /// PowercapFs / MsrDevice: where each domain lives.
    std::map<RaplDomain, DomainSource> sources;
    std::chrono::nanoseconds stale_timeout = SignalWatcher::kDefaultStaleTimeout;

    static AgentConfig from_json(const nlohmann::json& doc);
};

/// Files an agent leaves in the signal directory so a controller on another
/// machine can tell a session is being recorded (ack) and is closed (done).
std::filesystem::path ack_path(const std::filesystem::path& signal_dir, const std::string& session_id,
                               const std::string& node_id);
std::filesystem::path done_path(const std::filesystem::path& signal_dir, const std::string& session_id,
                                const std::string& node_id);

/// key=value body of an ack or done file.
std::map<std::string, std::string> read_kv_file(const std::filesystem::path& path);

/// One sampling loop per node serving every session announced in the signal
/// directory. Each session gets its own log file.
class Agent {
public:
    Agent(AgentConfig config, std::unique_ptr<CounterBackend> backend, Clock& clock);
    ~Agent();

    /// One iteration: poll markers, open/close sessions, sample open sessions.
    void step();
    /// Steps every interval until `stop` becomes true or the directory vanishes.
    void run(const std::atomic<bool>& stop);
    /// Closes remaining sessions as truncated.
    void shutdown();

    std::vector<std::string> open_sessions() const;
    bool fatal() const noexcept { return fatal_; }
    const std::vector<SessionEvent>& history() const noexcept { return history_; }

private:
    struct Session;
    void open_session(const SessionEvent& e, std::int64_t now);
    void close_session(const std::string& id, std::int64_t now, LogStatus status);

    AgentConfig config_;
    std::unique_ptr<CounterBackend> backend_;
    Clock& clock_;
    SignalWatcher watcher_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::vector<SessionEvent> history_;
    bool fatal_ = false;
};

std::unique_ptr<CounterBackend> make_backend(const AgentConfig& config, Clock& clock);

// ---------------------------------------------------------------------------
// Wrapped runs

struct AgentEndpoint {
    std::string node_id;
    /// Shell command with exactly one `{cmd}` placeholder, e.g. `kubectl exec pod -- {cmd}`.
    std::string exec_template;
    std::filesystem::path signal_dir;

    void validate() const;
    std::string render(const std::string& cmd) const;
};

struct RunConfig {
    std::string workflow_cmd;
    std::vector<AgentEndpoint> agents;
    double poll_interval_s = 5.0;
    std::string session_id;
    std::filesystem::path output_dir;
    /// Binary the agents' side runs for `signal start|stop`; defaults to this executable.
    std::string wattflow_bin;
    double start_timeout_s = 15.0;
    double stop_timeout_s = 15.0;
    std::optional<double> max_runtime_s;

    void validate() const;
    static RunConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

struct RunOutcome {
    EnergyReport report;
    int exit_code = 0;
    std::map<std::string, std::filesystem::path> collected_logs;
};

/// Starts measurement on every agent, runs the workflow, stops measurement,
/// collects the logs and writes `report.json` into the output directory.
RunOutcome run_wrapped(const RunConfig& config);

/// Recovers an interrupted run from `<output_dir>/run_state.json`: stops the
/// session on every agent, salvages logs and writes a partial report.
RunOutcome resume_run(const std::filesystem::path& output_dir, const std::string& session_id);

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

/// Runs `sh -c command`, capturing stdout.
CommandResult run_command(const std::string& command);
std::string shell_quote(const std::string& s);
std::string self_executable();

// ---------------------------------------------------------------------------
// Report and compare

enum class TraceFormat { Auto, Nextflow, Generic };

struct ReportOptions {
    std::filesystem::path logs_dir;
    std::filesystem::path trace_path;
    AttributionPolicy policy;
    TraceFormat trace_format = TraceFormat::Auto;
    TraceColumns columns;
    std::optional<std::string> session_id;
    std::optional<double> max_power_watts;
};

/// Loads every `rapl_<node>_<session>.csv` under the directory.
std::map<std::string, NodeEnergyLog> load_logs(const std::filesystem::path& dir,
                                               const std::optional<std::string>& session_id = std::nullopt,
                                               std::optional<double> max_power_watts = std::nullopt);

EnergyReport report_cmd(const ReportOptions& options);

struct CompareRow {
    std::string label;
    Method method;
    double joules = 0.0;
    double percent = 0.0;
};

/// Percentages of each report relative to the first one (the reference).
std::vector<CompareRow> compare_reports(const std::vector<std::pair<std::string, EnergyReport>>& reports);
std::string compare_table_text(const std::vector<CompareRow>& rows);
nlohmann::json compare_table_json(const std::string& workflow_id, const std::vector<CompareRow>& rows);

/// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitPartial = 4;

int exit_code_for(Errc code) noexcept;

}  // namespace wattflow
