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
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wattflow/accounting.hpp"
#include "wattflow/kernels.hpp"
#include "wattflow/sampler.hpp"
#include "wattflow/trace.hpp"

namespace wattflow::sim {

struct TaskLoad {
    std::string task_id;
    double start_s = 0.0;
    double end_s = 0.0;
    double watts = 0.0;
    /// Mean CPU rate used when a trace is derived from the loads.
    double cpu_rate = 1.0;
};

/// Piecewise-constant node power: idle plus every active task load.
/// Time runs from 0 (the scenario origin) to span_s.
struct PowerProfile {
    std::string node_id;
    double idle_watts = 0.0;
    std::vector<TaskLoad> task_loads;
    double span_s = 0.0;

    void validate() const;
    double power_at(double t_s) const;
    /// Sorted distinct instants where power may change, including 0 and span.
    std::vector<double> breakpoints() const;
    /// Same power curve as a mock counter profile, scaled by `share`.
    MockProfile to_mock(const CounterSpec& spec, double share, std::uint64_t seed) const;
};

/// Exact energy of the profile over [start_s, end_s].
double analytic_energy(const PowerProfile& profile, double start_s, double end_s);

/// One counter per node and domain; `share` is the fraction of node power the
/// domain sees.
struct DomainShare {
    CounterSpec spec;
    double share = 1.0;
};

struct MethodTiming {
    double shell_lead_s = 0.0;
    double plugin_delay_s = 0.0;
    double taskmethod_delay_s = 0.0;
    double scrape_interval_s = 30.0;
    /// Scrape instants are offset + k * interval.
    double scrape_offset_s = 0.0;
};

struct Scenario {
    std::vector<PowerProfile> profiles;
    WorkflowTrace trace;
    std::vector<DomainShare> domains;
    MethodTiming method_timing;
    std::int64_t sample_interval_ms = 500;
    std::uint64_t seed = 0;
    std::int64_t epoch_wall_ns = 1'700'000'000'000'000'000;
    /// Workflow bounds in scenario seconds.
    double workflow_start_s = 0.0;
    double workflow_end_s = 0.0;

    void validate() const;
    std::int64_t wall_ns(double t_s) const;
    double seconds(std::int64_t wall_ns) const;
};

Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const Scenario& s);

/// Builds a trace matching the profiles' task loads (cpu time = rate x duration).
WorkflowTrace derive_trace(const std::vector<PowerProfile>& profiles, const std::string& workflow_id,
                           std::int64_t epoch_wall_ns, double workflow_start_s, double workflow_end_s);

/// Constant node power `watts` across a workflow of `runtime_s`, with
/// `margin_s` of idle at `idle_watts` on both sides.
Scenario uniform_load_scenario(const std::string& workflow_id, std::size_t nodes, double runtime_s,
                               double watts, double idle_watts, double margin_s, MethodTiming timing);

struct GroundTruth {
    double total_joules = 0.0;
    std::map<std::string, double> per_node_joules;
    std::map<std::string, double> per_task_joules;
};

GroundTruth ground_truth(const Scenario& s);

/// Counter logs as an agent sampling every sample_interval_ms would write them.
std::map<std::string, NodeEnergyLog> synthesize_counters(const Scenario& s,
                                                         kernels::Exec exec = kernels::Exec::Parallel);

/// Per-instance average-power points as a scraper would store them: each
/// point is the true mean over the preceding scrape interval.
std::vector<PowerPoint> scrape_points(const Scenario& s);

struct CoverageRow {
    Method method;
    double joules = 0.0;
    double coverage = 0.0;          // against ground truth
    double percent_of_shell = 0.0;  // against the shell measurement
    Window window;
};

struct Evaluation {
    GroundTruth truth;
    std::vector<CoverageRow> rows;
    std::map<Method, EnergyReport> reports;
    /// Per-task attribution of the shell window (cputime policy).
    EnergyReport task_report;
};

Evaluation evaluate_methods(const Scenario& s, const std::map<std::string, NodeEnergyLog>& logs,
                            kernels::Exec exec = kernels::Exec::Parallel);
Evaluation evaluate_methods(const Scenario& s, kernels::Exec exec = kernels::Exec::Parallel);

std::string coverage_table_text(const Evaluation& e);
nlohmann::json coverage_table_json(const Evaluation& e);

/// Writes logs, trace, per-method reports and the coverage table under `out`.
Evaluation simulate_to_dir(const Scenario& s, const std::filesystem::path& out,
                           const std::string& session_id = "sim");

}  // namespace wattflow::sim
