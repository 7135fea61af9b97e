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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wattflow/counter.hpp"
#include "wattflow/kernels.hpp"
#include "wattflow/sampler.hpp"
#include "wattflow/trace.hpp"

namespace wattflow {

/// Half-open in spirit, closed in arithmetic: [start, end] in wall ns.
struct Window {
    std::int64_t start_wall_ns = 0;
    std::int64_t end_wall_ns = 0;

    double seconds() const noexcept { return static_cast<double>(end_wall_ns - start_wall_ns) * 1e-9; }
    bool operator==(const Window&) const = default;
};

using DomainJoules = std::map<RaplDomain, double>;

/// Node energy without double counting nested domains: psys when present,
/// otherwise package (or core + graphics without package) plus dram.
double node_total(const DomainJoules& joules);

/// Domain an idle baseline is subtracted from: psys, else package, else the first.
RaplDomain baseline_domain(const DomainJoules& present);

struct NodeEnergyLog {
    std::string node_id;
    std::map<RaplDomain, SampleSeries> series_by_domain;

    static NodeEnergyLog from_session(SessionLog log);
    void validate() const;
    /// Wall-time span covered by every domain.
    Window sampled_span() const;
};

struct NodeWindowEnergy {
    DomainJoules joules;
    bool unsafe_gap = false;
};

NodeWindowEnergy node_window_energy(const NodeEnergyLog& log, const Window& window);

enum class PolicyKind { CpuTimeShare, WallTimeShare, ExclusiveOnly };

std::string_view to_string(PolicyKind k) noexcept;

struct AttributionPolicy {
    PolicyKind kind = PolicyKind::CpuTimeShare;
    std::optional<double> idle_baseline_watts;
    /// Duration assumed for tasks logged with start == end.
    double sub_resolution_assumed_s = 0.5;

    void validate() const;
};

namespace note {
inline constexpr const char* kSubResolution = "sub_resolution";
inline constexpr const char* kSharedWindow = "shared_window";
inline constexpr const char* kUnsafeGap = "unsafe_gap";
inline constexpr const char* kZeroWeight = "zero_weight";
inline constexpr const char* kBaselineClamped = "baseline_clamped";
inline constexpr const char* kCpuTimeFallback = "cpu_time_fallback";
inline constexpr const char* kUnknownNode = "unknown_node";
}  // namespace note

struct TaskEnergy {
    std::string task_id;
    std::string node_id;
    DomainJoules joules_by_domain;
    bool estimated = false;
    std::set<std::string> notes;

    double total() const { return node_total(joules_by_domain); }
};

/// Window a task is charged for; sub-resolution tasks get the assumed
/// duration centred on their logged instant.
Window task_window(const TaskRecord& task, double sub_resolution_assumed_s = 0.5);

/// Energy of a task that ran alone on its node. `peers` are checked for overlap
/// on the same node; pass the whole trace.
TaskEnergy exclusive_task_energy(const TaskRecord& task, const NodeEnergyLog& log,
                                 const std::vector<TaskRecord>& peers,
                                 const AttributionPolicy& policy = {});

struct Attribution {
    std::vector<TaskEnergy> tasks;
    DomainJoules unattributed;
    DomainJoules node_energy;
    Window window;
    std::set<std::string> warnings;
};

/// Splits the node's energy over `window` (default: from the first task start
/// to the last task end) among concurrently running tasks.
Attribution attribute_concurrent(const std::vector<TaskRecord>& tasks, const NodeEnergyLog& log,
                                 const AttributionPolicy& policy,
                                 std::optional<Window> window = std::nullopt);

/// Sum of node totals over a common window. Every listed node needs a log.
EnergyQuantity workflow_total(const std::map<std::string, NodeEnergyLog>& logs,
                              const std::vector<std::string>& nodes, const Window& window);

struct PowerPoint {
    std::int64_t t_wall_ns = 0;
    double watts = 0.0;
};

/// Sum of the average-power points stamped in (end - duration, end], times
/// the scrape interval: the arithmetic of a `sum_over_time(...) * interval`
/// query, boundary coarseness included.
EnergyQuantity interval_estimate(const std::vector<PowerPoint>& points, const Window& window,
                                 double scrape_interval_s);

/// Same points, each weighted by the overlap of its averaging interval
/// (t - interval, t] with the window.
EnergyQuantity interval_estimate_corrected(const std::vector<PowerPoint>& points,
                                           const Window& window, double scrape_interval_s);

double coverage_compare(const EnergyQuantity& ground_truth, const EnergyQuantity& measured);

enum class Method { ShellWrap, SignalWorkflow, SignalPlugin, IntervalScrape };

std::string_view to_string(Method m) noexcept;
std::optional<Method> parse_method(std::string_view s) noexcept;

struct EnergyReport {
    static constexpr int kVersion = 1;

    std::string workflow_id;
    Method method = Method::ShellWrap;
    /// "ok", "failed" (workflow failed but was measured) or "partial".
    std::string status = "ok";
    std::optional<Window> window;
    std::vector<TaskEnergy> per_task;
    std::map<std::string, DomainJoules> per_node;
    std::map<std::string, DomainJoules> unattributed;
    double total_joules = 0.0;
    std::optional<double> coverage_fraction;
    std::vector<std::string> diagnostics;
    /// Free-form run metadata (session timing, workflow exit code, ...).
    nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json report_to_json(const EnergyReport& report);
EnergyReport report_from_json(const nlohmann::json& doc);

/// Full pipeline: per-node session energy plus per-task attribution.
/// Nodes are processed in parallel; output is independent of `exec`.
EnergyReport build_report(const std::map<std::string, NodeEnergyLog>& logs,
                          const WorkflowTrace& trace, const AttributionPolicy& policy,
                          Method method = Method::ShellWrap,
                          kernels::Exec exec = kernels::Exec::Parallel);

}  // namespace wattflow
