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

#include "wattflow/orchestrator.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "wattflow/error.hpp"
#include "wattflow/trace.hpp"

extern char** environ;

namespace wattflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        out.flush();
        if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(Errc::Io, "cannot rename into " + path.string());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::NotFound, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void sleep_s(double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); }

CounterSpec counter_spec_from_json(const json& j) {
    CounterSpec c;
    const auto d = parse_domain(j.at("domain").get<std::string>());
    if (!d) throw Error(Errc::SchemaViolation, "unknown domain '" + j.at("domain").get<std::string>() + "'");
    c.domain = *d;
    c.bit_width = j.value("bit_width", 32);
    c.energy_unit_joules = j.value("unit_j", 1e-6);
    c.update_period_s = j.value("update_period_s", 1e-3);
    if (j.contains("modulus")) c.modulus_override = j["modulus"].get<std::uint64_t>();
    return c;
}

}  // namespace

int exit_code_for(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidArgument:
            return kExitUsage;
        case Errc::MissingNodeLog:
        case Errc::WindowBeforeSeries:
        case Errc::WindowAfterSeries:
        case Errc::DegenerateSeries:
        case Errc::NoPointsInWindow:
            return kExitPartial;
        default:
            return kExitRuntime;
    }
}

// ---------------------------------------------------------------------------
// Agent

fs::path ack_path(const fs::path& signal_dir, const std::string& session_id, const std::string& node_id) {
    return signal_dir / ("ack_" + session_id + "_" + node_id + ".txt");
}

fs::path done_path(const fs::path& signal_dir, const std::string& session_id, const std::string& node_id) {
    return signal_dir / ("done_" + session_id + "_" + node_id + ".txt");
}

std::map<std::string, std::string> read_kv_file(const fs::path& path) {
    std::map<std::string, std::string> kv;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

AgentConfig AgentConfig::from_json(const json& doc) {
    AgentConfig c;
    try {
        c.sampler.node_id = doc.at("node_id").get<std::string>();
        c.sampler.interval_ms = doc.value("interval_ms", std::int64_t{500});
        c.sampler.log_dir = doc.at("log_dir").get<std::string>();
        c.sampler.signal_dir = doc.at("signal_dir").get<std::string>();
        if (doc.contains("max_power_watts")) c.sampler.max_power_watts = doc["max_power_watts"].get<double>();
        if (doc.contains("stale_timeout_s")) {
            c.stale_timeout = std::chrono::nanoseconds(
                static_cast<std::int64_t>(doc["stale_timeout_s"].get<double>() * 1e9));
        }
        for (const auto& d : doc.at("domains")) c.sampler.domains.push_back(counter_spec_from_json(d));
        const json& b = doc.at("backend");
        const std::string kind = b.at("kind").get<std::string>();
        if (kind == "mock") {
            c.backend = BackendKind::Mock;
            for (const auto& spec : c.sampler.domains) {
                const std::string name(to_string(spec.domain));
                const json& pj = b.at("profiles").at(name);
                MockProfile p;
                p.spec = spec;
                p.seed = pj.value("seed", std::uint64_t{0});
                for (const auto& seg : pj.at("segments")) {
                    p.segments.push_back({seg.at(0).get<double>(), seg.at(1).get<double>()});
                }
                p.validate();
                c.mock_profiles.emplace(spec.domain, std::move(p));
            }
        } else if (kind == "powercap" || kind == "msr") {
            c.backend = kind == "powercap" ? BackendKind::PowercapFs : BackendKind::MsrDevice;
            const json& paths = b.at(kind == "powercap" ? "zones" : "devices");
            for (const auto& spec : c.sampler.domains) {
                c.sources[spec.domain] = DomainSource{paths.at(std::string(to_string(spec.domain))).get<std::string>()};
            }
        } else {
            throw Error(Errc::InvalidArgument, "unknown backend kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("agent config: ") + e.what());
    }
    c.sampler.validate();
    return c;
}

std::unique_ptr<CounterBackend> make_backend(const AgentConfig& config, Clock& clock) {
    switch (config.backend) {
        case BackendKind::Mock:
            return std::make_unique<MockBackend>(config.mock_profiles, clock.now_ns());
        case BackendKind::PowercapFs:
            return std::make_unique<PowercapBackend>(config.sources);
        case BackendKind::MsrDevice:
            return std::make_unique<MsrBackend>(config.sources);
    }
    throw Error(Errc::InvalidArgument, "unknown backend");
}

struct Agent::Session {
    std::string id;
    fs::path log;
    std::unique_ptr<FileSink> sink;
    std::unique_ptr<SessionRecorder> recorder;
};

Agent::Agent(AgentConfig config, std::unique_ptr<CounterBackend> backend, Clock& clock)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      clock_(clock),
      watcher_(config_.sampler.signal_dir, config_.stale_timeout) {
    config_.sampler.validate();
    if (config_.backend == BackendKind::PowercapFs) {
        // The advertised range replaces whatever geometry the config guessed.
        auto* pc = dynamic_cast<PowercapBackend*>(backend_.get());
        if (pc) {
            for (auto& d : config_.sampler.domains) d = pc->spec_for(d.domain);
        }
    }
    fs::create_directories(config_.sampler.log_dir);
}

Agent::~Agent() = default;

void Agent::open_session(const SessionEvent& e, std::int64_t now) {
    auto s = std::make_unique<Session>();
    s->id = e.session_id;
    s->log = fs::absolute(log_path(config_.sampler.log_dir, config_.sampler.node_id, e.session_id));
    std::error_code ec;
    fs::remove(done_path(config_.sampler.signal_dir, e.session_id, config_.sampler.node_id), ec);
    if (fs::exists(s->log, ec)) {
        // A restarted agent picks the session up again; keep what was recorded before.
        for (int k = 1;; ++k) {
            fs::path aside = s->log;
            aside += ".part" + std::to_string(k);
            if (!fs::exists(aside, ec)) {
                fs::rename(s->log, aside, ec);
                break;
            }
        }
    }
    s->sink = std::make_unique<FileSink>(s->log);
    s->recorder = std::make_unique<SessionRecorder>(config_.sampler, *backend_, *s->sink, clock_.wall_offset_ns());
    s->recorder->open();
    s->recorder->tick(now);
    std::string ack = "session=" + e.session_id + "\nnode=" + config_.sampler.node_id + "\nlog=" + s->log.string() +
                      "\nfirst_record_wall_ns=" + std::to_string(now + clock_.wall_offset_ns()) + "\n";
    try {
        write_atomic(ack_path(config_.sampler.signal_dir, e.session_id, config_.sampler.node_id), ack);
    } catch (const Error&) {
        // Controller will time out waiting; the log itself is still recorded.
    }
    sessions_.emplace(e.session_id, std::move(s));
}

void Agent::close_session(const std::string& id, std::int64_t now, LogStatus status) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    Session& s = *it->second;
    const bool was_truncated = s.recorder->truncated();
    s.recorder->close(now, status);
    const char* st = (was_truncated || s.recorder->truncated()) ? "truncated"
                     : status == LogStatus::Reaped                ? "reaped"
                     : status == LogStatus::Truncated             ? "truncated"
                                                                  : "complete";
    std::string done = "session=" + id + "\nnode=" + config_.sampler.node_id + "\nlog=" + s.log.string() +
                       "\nstatus=" + st + "\nlast_record_wall_ns=" + std::to_string(now + clock_.wall_offset_ns()) +
                       "\n";
    try {
        write_atomic(done_path(config_.sampler.signal_dir, id, config_.sampler.node_id), done);
    } catch (const Error&) {
    }
    sessions_.erase(it);
}

void Agent::step() {
    const std::int64_t now = clock_.now_ns();
    const auto events = watcher_.poll(now + clock_.wall_offset_ns());
    std::set<std::string> fresh;
    // A marker found already stale (typically after a restart) has nothing left to record.
    std::set<std::string> reaped_now;
    for (const auto& e : events) {
        if (e.kind == SessionEventKind::Reaped) reaped_now.insert(e.session_id);
    }
    for (const auto& e : events) {
        history_.push_back(e);
        switch (e.kind) {
            case SessionEventKind::Started:
                if (reaped_now.count(e.session_id)) break;
                try {
                    open_session(e, now);
                    fresh.insert(e.session_id);
                } catch (const Error& err) {
                    std::fprintf(stderr, "wattflow agent: cannot open session %s: %s\n", e.session_id.c_str(),
                                 err.what());
                }
                break;
            case SessionEventKind::Stopped:
                close_session(e.session_id, now, LogStatus::Complete);
                break;
            case SessionEventKind::Reaped:
                close_session(e.session_id, now, LogStatus::Reaped);
                break;
            case SessionEventKind::Fatal:
                fatal_ = true;
                break;
        }
    }
    std::vector<std::string> truncated;
    for (auto& [id, s] : sessions_) {
        if (!fresh.count(id)) s->recorder->tick(now);
        if (s->recorder->truncated()) truncated.push_back(id);
    }
    for (const auto& id : truncated) close_session(id, now, LogStatus::Truncated);
    if (fatal_) shutdown();
}

void Agent::run(const std::atomic<bool>& stop) {
    const std::int64_t interval = config_.sampler.interval_ms * 1'000'000;
    std::int64_t next = clock_.now_ns();
    while (!stop.load() && !fatal_) {
        step();
        next += interval;
        // Sleep in short slices so a stop request is honoured promptly.
        while (!stop.load() && clock_.now_ns() < next) {
            clock_.sleep_until(std::min(next, clock_.now_ns() + 50'000'000));
        }
    }
    shutdown();
}

void Agent::shutdown() {
    const std::int64_t now = clock_.now_ns();
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    for (const auto& id : ids) close_session(id, now, LogStatus::Truncated);
}

std::vector<std::string> Agent::open_sessions() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// Subprocesses

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

std::string self_executable() {
    std::error_code ec;
    const auto p = fs::read_symlink("/proc/self/exe", ec);
    return ec ? std::string("wattflow") : p.string();
}

CommandResult run_command(const std::string& command) {
    CommandResult r;
    std::FILE* pipe = ::popen(command.c_str(), "r");
    if (!pipe) throw Error(Errc::Io, "cannot run: " + command);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    return r;
}

// ---------------------------------------------------------------------------
// Wrapped runs

void AgentEndpoint::validate() const {
    if (node_id.empty() || !is_filesystem_safe(node_id)) {
        throw Error(Errc::InvalidArgument, "agent node id '" + node_id + "' is not filesystem-safe");
    }
    const auto first = exec_template.find("{cmd}");
    if (first == std::string::npos || exec_template.find("{cmd}", first + 1) != std::string::npos) {
        throw Error(Errc::InvalidArgument, "exec template of '" + node_id + "' must contain {cmd} exactly once");
    }
    if (signal_dir.empty()) throw Error(Errc::InvalidArgument, "agent '" + node_id + "' has no signal_dir");
}

std::string AgentEndpoint::render(const std::string& cmd) const {
    std::string out = exec_template;
    out.replace(out.find("{cmd}"), 5, cmd);
    return out;
}

void RunConfig::validate() const {
    if (workflow_cmd.empty()) throw Error(Errc::InvalidArgument, "no workflow command");
    if (agents.empty()) throw Error(Errc::InvalidArgument, "at least one agent is required");
    if (!is_filesystem_safe(session_id)) {
        throw Error(Errc::InvalidArgument, "session id '" + session_id + "' is not filesystem-safe");
    }
    if (!(poll_interval_s > 0.0)) throw Error(Errc::InvalidArgument, "poll interval must be positive");
    if (output_dir.empty()) throw Error(Errc::InvalidArgument, "no output directory");
    std::set<std::string> nodes;
    for (const auto& a : agents) {
        a.validate();
        if (!nodes.insert(a.node_id).second) throw Error(Errc::InvalidArgument, "duplicate agent '" + a.node_id + "'");
    }
}

RunConfig RunConfig::from_json(const json& doc) {
    RunConfig c;
    try {
        c.workflow_cmd = doc.value("workflow_cmd", std::string{});
        c.session_id = doc.value("session_id", std::string{});
        c.output_dir = doc.value("output_dir", std::string{});
        c.poll_interval_s = doc.value("poll_interval_s", 5.0);
        c.wattflow_bin = doc.value("wattflow_bin", std::string{});
        c.start_timeout_s = doc.value("start_timeout_s", 15.0);
        c.stop_timeout_s = doc.value("stop_timeout_s", 15.0);
        if (doc.contains("max_runtime_s")) c.max_runtime_s = doc["max_runtime_s"].get<double>();
        for (const auto& a : doc.value("agents", json::array())) {
            c.agents.push_back({a.at("node_id").get<std::string>(), a.value("exec_template", std::string("{cmd}")),
                                a.at("signal_dir").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("run config: ") + e.what());
    }
    return c;
}

json RunConfig::to_json() const {
    json agents_j = json::array();
    for (const auto& a : agents) {
        agents_j.push_back({{"node_id", a.node_id}, {"exec_template", a.exec_template}, {"signal_dir", a.signal_dir.string()}});
    }
    json j{{"workflow_cmd", workflow_cmd},   {"session_id", session_id},
           {"output_dir", output_dir.string()}, {"poll_interval_s", poll_interval_s},
           {"wattflow_bin", wattflow_bin},   {"start_timeout_s", start_timeout_s},
           {"stop_timeout_s", stop_timeout_s}, {"agents", std::move(agents_j)}};
    if (max_runtime_s) j["max_runtime_s"] = *max_runtime_s;
    return j;
}

namespace {

struct RunState {
    RunConfig config;
    json doc;

    void save() const { write_atomic(config.output_dir / "run_state.json", doc.dump(2) + "\n"); }
};

std::string bin_of(const RunConfig& c) { return c.wattflow_bin.empty() ? self_executable() : c.wattflow_bin; }

/// One representative agent per distinct signal directory.
std::vector<const AgentEndpoint*> distinct_dirs(const RunConfig& c) {
    std::vector<const AgentEndpoint*> out;
    std::set<std::string> seen;
    for (const auto& a : c.agents) {
        if (seen.insert(fs::weakly_canonical(a.signal_dir).string()).second) out.push_back(&a);
    }
    return out;
}

std::vector<std::string> stop_sessions(const RunConfig& c, const std::vector<const AgentEndpoint*>& started) {
    std::vector<std::string> problems;
    for (const AgentEndpoint* a : started) {
        const std::string cmd = shell_quote(bin_of(c)) + " signal stop --dir " + shell_quote(a->signal_dir.string()) +
                                " --session " + shell_quote(c.session_id);
        const CommandResult r = run_command(a->render(cmd));
        if (r.exit_code != 0) {
            problems.push_back("agent '" + a->node_id + "': stop command exited " + std::to_string(r.exit_code));
        }
    }
    return problems;
}

/// Waits until each of `agents` has left `path_fn(agent)`; returns those that did not.
template <typename PathFn>
std::vector<const AgentEndpoint*> wait_for_files(std::vector<const AgentEndpoint*> pending, double timeout_s,
                                                 PathFn path_fn) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    while (true) {
        pending.erase(std::remove_if(pending.begin(), pending.end(),
                                     [&](const AgentEndpoint* a) { return fs::exists(path_fn(*a)); }),
                      pending.end());
        if (pending.empty() || std::chrono::steady_clock::now() >= deadline) return pending;
        sleep_s(0.02);
    }
}

template <typename PathFn>
std::vector<const AgentEndpoint*> wait_for_files(const RunConfig& c, double timeout_s, PathFn path_fn) {
    std::vector<const AgentEndpoint*> all;
    for (const auto& a : c.agents) all.push_back(&a);
    return wait_for_files(std::move(all), timeout_s, path_fn);
}

struct Collected {
    std::map<std::string, NodeEnergyLog> logs;
    std::map<std::string, fs::path> paths;
    json sessions = json::object();
    std::vector<std::string> diagnostics;
};

Collected collect_logs(const RunConfig& c) {
    Collected out;
    for (const auto& a : c.agents) {
        json info = json::object();
        const fs::path ack = ack_path(a.signal_dir, c.session_id, a.node_id);
        std::map<std::string, std::string> kv;
        try {
            kv = read_kv_file(ack);
        } catch (const Error&) {
            out.diagnostics.push_back("missing_log: agent '" + a.node_id + "' never acknowledged the session");
            out.sessions[a.node_id] = info;
            continue;
        }
        if (kv.count("first_record_wall_ns")) info["first_record_wall_ns"] = std::stoll(kv["first_record_wall_ns"]);
        const fs::path done = done_path(a.signal_dir, c.session_id, a.node_id);
        if (fs::exists(done)) {
            auto dk = read_kv_file(done);
            info["log_status"] = dk["status"];
        } else {
            info["log_status"] = "open";
        }
        const CommandResult r = run_command(a.render("cat " + shell_quote(kv["log"])));
        if (r.exit_code != 0) {
            out.diagnostics.push_back("missing_log: agent '" + a.node_id + "': collecting " + kv["log"] + " failed");
            out.sessions[a.node_id] = info;
            continue;
        }
        const fs::path local = log_path(c.output_dir, a.node_id, c.session_id);
        write_atomic(local, r.output);
        out.paths[a.node_id] = local;
        try {
            SessionLog sl = parse_log_text(r.output, local.string());
            if (sl.node_id != a.node_id) {
                throw Error(Errc::HeaderMismatch, "log header names node '" + sl.node_id + "'");
            }
            NodeEnergyLog nl = NodeEnergyLog::from_session(std::move(sl));
            const Window span = nl.sampled_span();
            info["last_record_wall_ns"] = span.end_wall_ns;
            out.logs.emplace(a.node_id, std::move(nl));
        } catch (const Error& e) {
            out.diagnostics.push_back("missing_log: agent '" + a.node_id + "': " + e.what());
        }
        out.sessions[a.node_id] = info;
    }
    return out;
}

void cleanup_acks(const RunConfig& c) {
    std::error_code ec;
    for (const auto& a : c.agents) {
        fs::remove(ack_path(a.signal_dir, c.session_id, a.node_id), ec);
        fs::remove(done_path(a.signal_dir, c.session_id, a.node_id), ec);
    }
}

RunOutcome finish_report(const RunConfig& c, Collected col, const json& workflow_info, int workflow_exit,
                         bool resumed) {
    RunOutcome outcome;
    EnergyReport& r = outcome.report;
    r.workflow_id = c.session_id;
    r.method = Method::ShellWrap;
    r.diagnostics = col.diagnostics;
    Window span{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::min()};
    for (const auto& [node, log] : col.logs) {
        const Window w = log.sampled_span();
        const NodeWindowEnergy e = node_window_energy(log, w);
        r.per_node[node] = e.joules;
        r.total_joules += node_total(e.joules);
        if (e.unsafe_gap) r.diagnostics.push_back("node '" + node + "': unsafe sampling gap");
        span.start_wall_ns = std::min(span.start_wall_ns, w.start_wall_ns);
        span.end_wall_ns = std::max(span.end_wall_ns, w.end_wall_ns);
    }
    if (!col.logs.empty()) r.window = span;
    const bool missing = col.logs.size() != c.agents.size();
    if (missing || resumed) {
        r.status = "partial";
    } else if (workflow_exit != 0) {
        r.status = "failed";
    }
    // The wrapping method measures the whole run by construction.
    if (!missing) r.coverage_fraction = 1.0;
    r.extra["session_id"] = c.session_id;
    r.extra["sessions"] = col.sessions;
    r.extra["workflow"] = workflow_info;
    if (resumed) r.diagnostics.push_back("resumed after an interrupted run; workflow outcome unknown");
    outcome.collected_logs = col.paths;
    outcome.exit_code = (missing || resumed) ? kExitPartial : workflow_exit != 0 ? kExitRuntime : kExitOk;
    write_atomic(c.output_dir / "report.json", report_to_json(r).dump(2) + "\n");
    return outcome;
}

}  // namespace

RunOutcome run_wrapped(const RunConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);
    RunState state{config, json::object()};
    state.doc["config"] = config.to_json();
    state.doc["status"] = "starting";
    state.doc["started_wall_ns"] = wall_now_ns();
    state.save();

    const auto dirs = distinct_dirs(config);
    std::vector<const AgentEndpoint*> started;
    const auto abort_start = [&](const std::string& why) {
        stop_sessions(config, started);
        // Only agents that acknowledged will leave a done file.
        std::vector<const AgentEndpoint*> acked;
        for (const auto& a : config.agents) {
            if (fs::exists(ack_path(a.signal_dir, config.session_id, a.node_id))) acked.push_back(&a);
        }
        wait_for_files(acked, config.stop_timeout_s,
                       [&](const AgentEndpoint& a) { return done_path(a.signal_dir, config.session_id, a.node_id); });
        cleanup_acks(config);
        state.doc["status"] = "aborted";
        state.save();
        throw Error(Errc::AgentStart, why + "; workflow not launched");
    };
    for (const AgentEndpoint* a : dirs) {
        std::string cmd = shell_quote(bin_of(config)) + " signal start --dir " + shell_quote(a->signal_dir.string()) +
                          " --session " + shell_quote(config.session_id);
        if (config.max_runtime_s) cmd += " --max-runtime-s " + std::to_string(*config.max_runtime_s);
        const CommandResult r = run_command(a->render(cmd));
        if (r.exit_code != 0) {
            abort_start("agent '" + a->node_id + "': start command exited " + std::to_string(r.exit_code));
        }
        started.push_back(a);
    }
    const auto unacked = wait_for_files(config, config.start_timeout_s, [&](const AgentEndpoint& a) {
        return ack_path(a.signal_dir, config.session_id, a.node_id);
    });
    if (!unacked.empty()) {
        abort_start("agent '" + unacked.front()->node_id + "' did not acknowledge the session");
    }

    // Launch strictly after every agent's first record.
    std::int64_t latest_first = 0;
    for (const auto& a : config.agents) {
        const auto kv = read_kv_file(ack_path(a.signal_dir, config.session_id, a.node_id));
        latest_first = std::max<std::int64_t>(latest_first, std::stoll(kv.at("first_record_wall_ns")));
    }
    while (wall_now_ns() <= latest_first) sleep_s(0.001);

    json workflow_info{{"command", config.workflow_cmd}};
    const std::int64_t launch = wall_now_ns();
    pid_t pid = -1;
    const char* argv[] = {"sh", "-c", config.workflow_cmd.c_str(), nullptr};
    if (::posix_spawn(&pid, "/bin/sh", nullptr, nullptr, const_cast<char**>(argv), environ) != 0) {
        stop_sessions(config, started);
        throw Error(Errc::Io, "cannot launch workflow");
    }
    workflow_info["launch_wall_ns"] = launch;
    state.doc["status"] = "running";
    state.doc["workflow"] = workflow_info;
    state.save();

    int status = 0;
    while (true) {
        const pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0) {
            status = 0;
            break;
        }
        sleep_s(config.poll_interval_s);
    }
    const std::int64_t end = wall_now_ns();
    const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    workflow_info["end_wall_ns"] = end;
    workflow_info["exit_code"] = exit_code;
    state.doc["workflow"] = workflow_info;
    state.doc["status"] = "stopping";
    state.save();

    auto problems = stop_sessions(config, started);
    const auto not_done = wait_for_files(config, config.stop_timeout_s, [&](const AgentEndpoint& a) {
        return done_path(a.signal_dir, config.session_id, a.node_id);
    });
    Collected col = collect_logs(config);
    for (auto& p : problems) col.diagnostics.push_back(std::move(p));
    for (const AgentEndpoint* a : not_done) {
        col.diagnostics.push_back("agent '" + a->node_id + "' did not confirm the session was closed");
    }
    RunOutcome outcome = finish_report(config, std::move(col), workflow_info, exit_code, false);
    cleanup_acks(config);
    state.doc["status"] = "done";
    state.save();
    return outcome;
}

RunOutcome resume_run(const fs::path& output_dir, const std::string& session_id) {
    const fs::path state_path = output_dir / "run_state.json";
    json doc;
    try {
        doc = json::parse(read_file(state_path));
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, state_path.string() + ": " + e.what());
    }
    RunConfig config = RunConfig::from_json(doc.at("config"));
    if (config.session_id != session_id) {
        throw Error(Errc::InvalidArgument, "run state is for session '" + config.session_id + "', not '" + session_id + "'");
    }
    config.output_dir = output_dir;
    config.validate();
    const auto dirs = distinct_dirs(config);
    auto problems = stop_sessions(config, dirs);
    wait_for_files(config, config.stop_timeout_s, [&](const AgentEndpoint& a) {
        return done_path(a.signal_dir, config.session_id, a.node_id);
    });
    Collected col = collect_logs(config);
    for (auto& p : problems) col.diagnostics.push_back(std::move(p));
    const json workflow_info = doc.value("workflow", json::object());
    RunOutcome outcome = finish_report(config, std::move(col), workflow_info, 0, true);
    cleanup_acks(config);
    doc["status"] = "resumed";
    write_atomic(state_path, doc.dump(2) + "\n");
    return outcome;
}

// ---------------------------------------------------------------------------
// Report and compare

std::map<std::string, NodeEnergyLog> load_logs(const fs::path& dir, const std::optional<std::string>& session_id,
                                               std::optional<double> max_power_watts) {
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw Error(Errc::NotFound, "log directory " + dir.string() + " not found");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("rapl_", 0) != 0 || entry.path().extension() != ".csv") continue;
        if (session_id && name.size() < session_id->size() + 5) continue;
        if (session_id && name.compare(name.size() - session_id->size() - 5, std::string::npos, "_" + *session_id + ".csv") != 0) {
            continue;
        }
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, NodeEnergyLog> logs;
    for (const auto& f : files) {
        NodeEnergyLog nl = NodeEnergyLog::from_session(parse_log(f, max_power_watts));
        const std::string node = nl.node_id;
        if (!logs.emplace(node, std::move(nl)).second) {
            throw Error(Errc::InvalidArgument, "several logs for node '" + node + "' in " + dir.string() +
                                                   "; select one session with --session");
        }
    }
    return logs;
}

EnergyReport report_cmd(const ReportOptions& o) {
    WorkflowTrace trace;
    TraceFormat fmt = o.trace_format;
    if (fmt == TraceFormat::Auto) fmt = o.trace_path.extension() == ".json" ? TraceFormat::Generic : TraceFormat::Nextflow;
    trace = fmt == TraceFormat::Generic ? parse_generic_trace(o.trace_path) : parse_nextflow_trace(o.trace_path, o.columns);
    const auto logs = load_logs(o.logs_dir, o.session_id, o.max_power_watts);
    return build_report(logs, trace, o.policy, Method::ShellWrap);
}

std::vector<CompareRow> compare_reports(const std::vector<std::pair<std::string, EnergyReport>>& reports) {
    if (reports.empty()) throw Error(Errc::InvalidArgument, "nothing to compare");
    const EnergyReport& ref = reports.front().second;
    std::vector<CompareRow> rows;
    for (const auto& [label, r] : reports) {
        if (r.workflow_id != ref.workflow_id) {
            throw Error(Errc::WorkflowMismatch,
                        "report '" + label + "' is for workflow '" + r.workflow_id + "', reference is '" + ref.workflow_id + "'");
        }
        const double frac = coverage_compare(EnergyQuantity{ref.total_joules}, EnergyQuantity{r.total_joules});
        rows.push_back({label, r.method, r.total_joules, 100.0 * frac});
    }
    return rows;
}

std::string compare_table_text(const std::vector<CompareRow>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-24s %-16s %16s %9s\n", "report", "method", "joules", "percent");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-24s %-16s %16.2f %9.2f\n", r.label.c_str(),
                      std::string(to_string(r.method)).c_str(), r.joules, r.percent);
        out += buf;
    }
    return out;
}

json compare_table_json(const std::string& workflow_id, const std::vector<CompareRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        char pct[32];
        std::snprintf(pct, sizeof(pct), "%.2f", r.percent);
        arr.push_back({{"report", r.label},
                       {"method", std::string(to_string(r.method))},
                       {"joules", r.joules},
                       {"percent", r.percent},
                       {"percent_text", pct}});
    }
    return json{{"workflow_id", workflow_id}, {"rows", std::move(arr)}};
}

}  // namespace wattflow
