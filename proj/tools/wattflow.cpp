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

// wattflow command-line front end.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "wattflow/accounting.hpp"
#include "wattflow/error.hpp"
#include "wattflow/orchestrator.hpp"
#include "wattflow/signal.hpp"
#include "wattflow/simharness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wattflow;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidArgument, "cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidArgument, path + ": " + e.what());
    }
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::fwrite(text.data(), 1, text.size(), stdout);
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::Io, "cannot write " + out_path);
}

EnergyReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::NotFound, "cannot open report " + path);
    try {
        return report_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, path + ": " + e.what());
    }
}

int cmd_agent(const std::string& config_path, double max_runtime_s) {
    if (config_path.empty()) throw Error(Errc::InvalidArgument, "agent needs --config");
    AgentConfig config = AgentConfig::from_json(load_json(config_path));
    for (const auto& w : config.sampler.warnings()) std::fprintf(stderr, "wattflow agent: warning: %s\n", w.c_str());
    SteadyClock clock;
    Agent agent(config, make_backend(config, clock), clock);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGINT, on_signal);
    std::thread timer;
    if (max_runtime_s > 0) {
        timer = std::thread([max_runtime_s] {
            const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(max_runtime_s);
            while (!g_stop.load() && std::chrono::steady_clock::now() < until) {
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
            g_stop.store(true);
        });
    }
    agent.run(g_stop);
    g_stop.store(true);
    if (timer.joinable()) timer.join();
    if (agent.fatal()) {
        std::fprintf(stderr, "wattflow agent: signal directory vanished\n");
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wattflow: RAPL energy measurement for scientific workflows"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON configuration file");

    auto* agent = app.add_subcommand("agent", "Run the node sampling daemon");
    double agent_max_runtime = 0.0;
    agent->add_option("--max-runtime-s", agent_max_runtime, "Exit after this many seconds");

    auto* run = app.add_subcommand("run", "Measure a workflow command end to end");
    std::string run_cmd, run_session, run_out, run_resume;
    run->add_option("--cmd", run_cmd, "Workflow command");
    run->add_option("--session", run_session, "Session id");
    run->add_option("--out", run_out, "Output directory");
    run->add_option("--resume", run_resume, "Recover an interrupted run of this session");

    auto* report = app.add_subcommand("report", "Compute per-task energy from logs and a trace");
    std::string rep_logs, rep_trace, rep_policy = "cputime", rep_out, rep_session, rep_format = "auto";
    double rep_idle = -1.0, rep_max_power = -1.0;
    report->add_option("--logs", rep_logs, "Directory of rapl_*.csv logs")->required();
    report->add_option("--trace", rep_trace, "Workflow trace")->required();
    report->add_option("--policy", rep_policy, "Attribution policy")
        ->check(CLI::IsMember({"cputime", "walltime", "exclusive"}));
    report->add_option("--idle-baseline-watts", rep_idle, "Idle power charged to no task");
    report->add_option("--trace-format", rep_format, "Trace format")
        ->check(CLI::IsMember({"auto", "nextflow", "generic"}));
    report->add_option("--session", rep_session, "Only logs of this session");
    report->add_option("--max-power-watts", rep_max_power, "Power bound for the wrap-safety check");
    report->add_option("--out", rep_out, "Write the report here instead of stdout");

    auto* compare = app.add_subcommand("compare", "Coverage of reports relative to the first one");
    std::vector<std::string> cmp_reports;
    std::string cmp_json;
    compare->add_option("reports", cmp_reports, "Report files; the first is the reference")->required();
    compare->add_option("--json", cmp_json, "Also write the table as JSON here");

    auto* simulate = app.add_subcommand("simulate", "Evaluate all methods on a synthetic scenario");
    std::string sim_scenario, sim_out;
    simulate->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
    simulate->add_option("--out", sim_out, "Output directory")->required();

    auto* signal = app.add_subcommand("signal", "Create or remove a session marker");
    signal->require_subcommand(1);
    std::string sig_dir, sig_session, sig_task;
    double sig_max_runtime = 0.0;
    bool sig_task_scope = false;
    auto* sig_start = signal->add_subcommand("start", "Start a session");
    auto* sig_stop = signal->add_subcommand("stop", "Stop a session");
    for (auto* sc : {sig_start, sig_stop}) {
        sc->add_option("--dir", sig_dir, "Signal directory")->required();
        sc->add_option("--session", sig_session, "Session id")->required();
    }
    sig_start->add_option("--task", sig_task, "Task id for task-scoped sessions");
    sig_start->add_flag("--task-scope", sig_task_scope, "Session covers one task");
    sig_start->add_option("--max-runtime-s", sig_max_runtime, "Declared runtime bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*agent) return cmd_agent(config_path, agent_max_runtime);

        if (*run) {
            if (!run_resume.empty()) {
                if (run_out.empty()) throw Error(Errc::InvalidArgument, "--resume needs --out");
                const RunOutcome o = resume_run(run_out, run_resume);
                std::cout << report_to_json(o.report).dump(2) << "\n";
                return o.exit_code;
            }
            RunConfig rc = config_path.empty() ? RunConfig{} : RunConfig::from_json(load_json(config_path));
            if (!run_cmd.empty()) rc.workflow_cmd = run_cmd;
            if (!run_session.empty()) rc.session_id = run_session;
            if (!run_out.empty()) rc.output_dir = run_out;
            const RunOutcome o = run_wrapped(rc);
            std::cout << report_to_json(o.report).dump(2) << "\n";
            for (const auto& d : o.report.diagnostics) std::fprintf(stderr, "wattflow run: %s\n", d.c_str());
            return o.exit_code;
        }

        if (*report) {
            ReportOptions o;
            o.logs_dir = rep_logs;
            o.trace_path = rep_trace;
            o.policy.kind = rep_policy == "walltime"    ? PolicyKind::WallTimeShare
                            : rep_policy == "exclusive" ? PolicyKind::ExclusiveOnly
                                                        : PolicyKind::CpuTimeShare;
            if (rep_idle >= 0) o.policy.idle_baseline_watts = rep_idle;
            if (rep_max_power > 0) o.max_power_watts = rep_max_power;
            if (!rep_session.empty()) o.session_id = rep_session;
            o.trace_format = rep_format == "nextflow"  ? TraceFormat::Nextflow
                             : rep_format == "generic" ? TraceFormat::Generic
                                                       : TraceFormat::Auto;
            if (!config_path.empty()) {
                const json cfg = load_json(config_path);
                if (cfg.contains("trace_columns")) o.columns = TraceColumns::from_json(cfg["trace_columns"]);
            }
            o.policy.validate();
            const EnergyReport r = report_cmd(o);
            emit(report_to_json(r).dump(2) + "\n", rep_out);
            for (const auto& d : r.diagnostics) std::fprintf(stderr, "wattflow report: %s\n", d.c_str());
            return r.status == "partial" ? kExitPartial : kExitOk;
        }

        if (*compare) {
            std::vector<std::pair<std::string, EnergyReport>> reports;
            for (const auto& p : cmp_reports) reports.emplace_back(fs::path(p).stem().string(), load_report(p));
            const auto rows = compare_reports(reports);
            std::cout << compare_table_text(rows);
            if (!cmp_json.empty()) emit(compare_table_json(reports.front().second.workflow_id, rows).dump(2) + "\n", cmp_json);
            return kExitOk;
        }

        if (*simulate) {
            const sim::Scenario s = sim::scenario_from_json(load_json(sim_scenario));
            const sim::Evaluation e = sim::simulate_to_dir(s, sim_out);
            std::cout << sim::coverage_table_text(e);
            return kExitOk;
        }

        if (*sig_start) {
            SessionMarker m;
            m.session_id = sig_session;
            m.created_wall_ns = wall_now_ns();
            if (sig_task_scope || !sig_task.empty()) {
                m.scope = SessionScope::Task;
                if (!sig_task.empty()) m.task_id = sig_task;
            }
            if (sig_max_runtime > 0) m.max_runtime_s = sig_max_runtime;
            signal_start(sig_dir, m);
            return kExitOk;
        }
        if (*sig_stop) {
            const StopResult r = signal_stop(sig_dir, sig_session);
            if (r.was_absent) std::fprintf(stderr, "wattflow signal: no active session '%s'\n", sig_session.c_str());
            return kExitOk;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "wattflow: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "wattflow: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
