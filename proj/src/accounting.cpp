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

#include "wattflow/accounting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wattflow/error.hpp"

namespace wattflow {

using nlohmann::json;

double node_total(const DomainJoules& j) {
    const auto get = [&](RaplDomain d) {
        auto it = j.find(d);
        return it == j.end() ? 0.0 : it->second;
    };
    if (j.count(RaplDomain::Psys)) return get(RaplDomain::Psys);
    double total = j.count(RaplDomain::Package) ? get(RaplDomain::Package)
                                                : get(RaplDomain::Core) + get(RaplDomain::Graphics);
    return total + get(RaplDomain::Dram);
}

RaplDomain baseline_domain(const DomainJoules& present) {
    if (present.count(RaplDomain::Psys)) return RaplDomain::Psys;
    if (present.count(RaplDomain::Package)) return RaplDomain::Package;
    return present.empty() ? RaplDomain::Package : present.begin()->first;
}

NodeEnergyLog NodeEnergyLog::from_session(SessionLog log) {
    NodeEnergyLog out;
    out.node_id = log.node_id;
    out.series_by_domain = std::move(log.series);
    out.validate();
    return out;
}

void NodeEnergyLog::validate() const {
    if (series_by_domain.empty()) {
        throw Error(Errc::DegenerateSeries, "node '" + node_id + "' has no series");
    }
    for (const auto& [d, s] : series_by_domain) {
        if (s.node_id != node_id) {
            throw Error(Errc::InvalidArgument, "series of node '" + s.node_id + "' filed under '" + node_id + "'");
        }
        if (s.spec.domain != d) throw Error(Errc::InvalidArgument, "series filed under the wrong domain");
        if (s.samples.size() < 2) {
            throw Error(Errc::DegenerateSeries, "node '" + node_id + "' domain " +
                                                    std::string(to_string(d)) + " has fewer than 2 samples");
        }
    }
}

Window NodeEnergyLog::sampled_span() const {
    validate();
    Window w{std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::max()};
    for (const auto& [d, s] : series_by_domain) {
        w.start_wall_ns = std::max(w.start_wall_ns, s.epoch_wall_ns + s.samples.front().t_ns);
        w.end_wall_ns = std::min(w.end_wall_ns, s.epoch_wall_ns + s.samples.back().t_ns);
    }
    if (w.end_wall_ns < w.start_wall_ns) {
        throw Error(Errc::DegenerateSeries, "domains of node '" + node_id + "' do not overlap in time");
    }
    return w;
}

namespace {

struct Integrators {
    std::map<RaplDomain, SeriesIntegrator> by_domain;

    explicit Integrators(const NodeEnergyLog& log) {
        for (const auto& [d, s] : log.series_by_domain) by_domain.emplace(d, SeriesIntegrator(s));
    }

    /// Energy for [a, b] in wall ns; zero-length windows are zero.
    WindowEnergy integrate(RaplDomain d, std::int64_t a, std::int64_t b) const {
        const SeriesIntegrator& integ = by_domain.at(d);
        const std::int64_t epoch = integ.series().epoch_wall_ns;
        if (a == b) {
            // Still enforce the range contract.
            (void)integ.cumulative_joules(a - epoch);
            return WindowEnergy{};
        }
        return integ.integrate(a - epoch, b - epoch);
    }
};

bool overlaps(const Window& a, const Window& b) {
    return std::min(a.end_wall_ns, b.end_wall_ns) > std::max(a.start_wall_ns, b.start_wall_ns);
}

void add_trace_notes(const TaskRecord& t, TaskEnergy& e) {
    if (t.sub_resolution) e.notes.insert(note::kSubResolution);
    if (t.cpu_time_fallback) e.notes.insert(note::kCpuTimeFallback);
    if (t.unknown_node) e.notes.insert(note::kUnknownNode);
}

}  // namespace

NodeWindowEnergy node_window_energy(const NodeEnergyLog& log, const Window& window) {
    if (window.end_wall_ns < window.start_wall_ns) {
        throw Error(Errc::InvalidArgument, "window end precedes start");
    }
    log.validate();
    Integrators integ(log);
    NodeWindowEnergy out;
    for (const auto& [d, s] : log.series_by_domain) {
        const WindowEnergy e = integ.integrate(d, window.start_wall_ns, window.end_wall_ns);
        out.joules[d] = e.energy.joules;
        out.unsafe_gap = out.unsafe_gap || e.unsafe_gap;
    }
    return out;
}

std::string_view to_string(PolicyKind k) noexcept {
    switch (k) {
        case PolicyKind::CpuTimeShare: return "cputime";
        case PolicyKind::WallTimeShare: return "walltime";
        case PolicyKind::ExclusiveOnly: return "exclusive";
    }
    return "cputime";
}

void AttributionPolicy::validate() const {
    if (idle_baseline_watts && (!std::isfinite(*idle_baseline_watts) || *idle_baseline_watts < 0.0)) {
        throw Error(Errc::InvalidArgument, "idle baseline must be finite and non-negative");
    }
    if (idle_baseline_watts && kind == PolicyKind::ExclusiveOnly) {
        throw Error(Errc::InvalidArgument, "idle baseline only applies to share policies");
    }
    if (!(sub_resolution_assumed_s > 0.0) || !std::isfinite(sub_resolution_assumed_s)) {
        throw Error(Errc::InvalidArgument, "assumed sub-resolution duration must be positive");
    }
}

Window task_window(const TaskRecord& task, double sub_resolution_assumed_s) {
    if (task.end_wall_ns > task.start_wall_ns) return Window{task.start_wall_ns, task.end_wall_ns};
    const auto half = static_cast<std::int64_t>(std::llround(sub_resolution_assumed_s * 0.5e9));
    return Window{task.start_wall_ns - half, task.start_wall_ns + half};
}

TaskEnergy exclusive_task_energy(const TaskRecord& task, const NodeEnergyLog& log,
                                 const std::vector<TaskRecord>& peers,
                                 const AttributionPolicy& policy) {
    if (task.node_id != log.node_id) {
        throw Error(Errc::InvalidArgument,
                    "task '" + task.task_id + "' ran on '" + task.node_id + "', log is for '" + log.node_id + "'");
    }
    const Window w = task_window(task, policy.sub_resolution_assumed_s);
    for (const auto& p : peers) {
        if (p.task_id == task.task_id || p.node_id != task.node_id) continue;
        if (overlaps(w, task_window(p, policy.sub_resolution_assumed_s))) {
            throw Error(Errc::OverlapDetected, "task '" + task.task_id + "' overlaps '" + p.task_id +
                                                   "' on node '" + task.node_id +
                                                   "'; use a share policy (attribute_concurrent)");
        }
    }
    const NodeWindowEnergy e = node_window_energy(log, w);
    TaskEnergy out;
    out.task_id = task.task_id;
    out.node_id = task.node_id;
    out.joules_by_domain = e.joules;
    out.estimated = task.sub_resolution;
    add_trace_notes(task, out);
    if (e.unsafe_gap) out.notes.insert(note::kUnsafeGap);
    return out;
}

Attribution attribute_concurrent(const std::vector<TaskRecord>& tasks, const NodeEnergyLog& log,
                                 const AttributionPolicy& policy, std::optional<Window> window) {
    policy.validate();
    log.validate();
    for (const auto& t : tasks) {
        if (t.node_id != log.node_id) {
            throw Error(Errc::InvalidArgument, "task '" + t.task_id + "' ran on '" + t.node_id +
                                                   "', log is for '" + log.node_id + "'");
        }
    }

    Attribution out;
    if (policy.kind == PolicyKind::ExclusiveOnly) {
        out.window = window.value_or(Window{});
        if (!window) {
            if (tasks.empty()) throw Error(Errc::InvalidArgument, "no tasks and no window");
            out.window = {std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::min()};
            for (const auto& t : tasks) {
                const Window w = task_window(t, policy.sub_resolution_assumed_s);
                out.window.start_wall_ns = std::min(out.window.start_wall_ns, w.start_wall_ns);
                out.window.end_wall_ns = std::max(out.window.end_wall_ns, w.end_wall_ns);
            }
        }
        out.node_energy = node_window_energy(log, out.window).joules;
        out.unattributed = out.node_energy;
        for (const auto& t : tasks) {
            out.tasks.push_back(exclusive_task_energy(t, log, tasks, policy));
            for (const auto& [d, j] : out.tasks.back().joules_by_domain) out.unattributed[d] -= j;
        }
        for (auto& [d, j] : out.unattributed) j = std::max(0.0, j);
        return out;
    }

    struct Item {
        Window full;
        Window clipped;
        double weight = 1.0;
        bool shared = false;
        bool zero_weight = false;
        bool clamped = false;
    };
    std::vector<Item> items(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        items[i].full = task_window(tasks[i], policy.sub_resolution_assumed_s);
        if (policy.kind == PolicyKind::CpuTimeShare) {
            items[i].weight = std::max(0.0, tasks[i].cpu_time_s) / items[i].full.seconds();
        }
    }
    if (!window) {
        if (tasks.empty()) throw Error(Errc::InvalidArgument, "no tasks and no window");
        Window w{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::min()};
        for (const auto& it : items) {
            w.start_wall_ns = std::min(w.start_wall_ns, it.full.start_wall_ns);
            w.end_wall_ns = std::max(w.end_wall_ns, it.full.end_wall_ns);
        }
        window = w;
    }
    if (window->end_wall_ns < window->start_wall_ns) {
        throw Error(Errc::InvalidArgument, "window end precedes start");
    }
    out.window = *window;

    std::vector<std::int64_t> cuts{window->start_wall_ns, window->end_wall_ns};
    for (auto& it : items) {
        it.clipped.start_wall_ns = std::clamp(it.full.start_wall_ns, window->start_wall_ns, window->end_wall_ns);
        it.clipped.end_wall_ns = std::clamp(it.full.end_wall_ns, window->start_wall_ns, window->end_wall_ns);
        cuts.push_back(it.clipped.start_wall_ns);
        cuts.push_back(it.clipped.end_wall_ns);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    const Integrators integ(log);
    DomainJoules present;
    for (const auto& [d, s] : log.series_by_domain) present[d] = 0.0;
    const RaplDomain base_dom = baseline_domain(present);

    out.tasks.resize(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        out.tasks[i].task_id = tasks[i].task_id;
        out.tasks[i].node_id = tasks[i].node_id;
        out.tasks[i].estimated = true;
        for (const auto& [d, z] : present) out.tasks[i].joules_by_domain[d] = 0.0;
    }
    out.unattributed = present;
    out.node_energy = present;

    std::vector<std::size_t> active;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const std::int64_t a = cuts[k];
        const std::int64_t b = cuts[k + 1];
        active.clear();
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].clipped.start_wall_ns <= a && items[i].clipped.end_wall_ns >= b) active.push_back(i);
        }
        double total_weight = 0.0;
        for (auto i : active) total_weight += items[i].weight;
        const bool equal_split = !active.empty() && !(total_weight > 0.0);
        if (equal_split) {
            out.warnings.insert(note::kZeroWeight);
            for (auto i : active) items[i].zero_weight = true;
        }
        if (active.size() > 1) {
            for (auto i : active) items[i].shared = true;
        }
        const double dt = static_cast<double>(b - a) * 1e-9;
        for (const auto& [d, z] : present) {
            const double e = integ.integrate(d, a, b).energy.joules;
            out.node_energy[d] += e;
            if (active.empty()) {
                out.unattributed[d] += e;
                continue;
            }
            double attributable = e;
            if (policy.idle_baseline_watts && d == base_dom) {
                const double base = *policy.idle_baseline_watts * dt;
                if (e < base) {
                    out.warnings.insert(note::kBaselineClamped);
                    for (auto i : active) items[i].clamped = true;
                }
                attributable = std::max(0.0, e - base);
            }
            double given = 0.0;
            for (auto i : active) {
                const double share = equal_split ? attributable / static_cast<double>(active.size())
                                                 : attributable * (items[i].weight / total_weight);
                out.tasks[i].joules_by_domain[d] += share;
                given += share;
            }
            out.unattributed[d] += e - given;
        }
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        TaskEnergy& te = out.tasks[i];
        add_trace_notes(tasks[i], te);
        if (items[i].shared) te.notes.insert(note::kSharedWindow);
        if (items[i].zero_weight) te.notes.insert(note::kZeroWeight);
        if (items[i].clamped) te.notes.insert(note::kBaselineClamped);
        if (items[i].clipped.end_wall_ns > items[i].clipped.start_wall_ns) {
            for (const auto& [d, z] : present) {
                if (integ.integrate(d, items[i].clipped.start_wall_ns, items[i].clipped.end_wall_ns).unsafe_gap) {
                    te.notes.insert(note::kUnsafeGap);
                }
            }
        }
    }
    for (auto& [d, j] : out.unattributed) {
        // Rounding residue only; attribution never hands out more than it has.
        if (j < 0.0) j = 0.0;
    }
    return out;
}

EnergyQuantity workflow_total(const std::map<std::string, NodeEnergyLog>& logs,
                              const std::vector<std::string>& nodes, const Window& window) {
    double total = 0.0;
    for (const auto& n : nodes) {
        auto it = logs.find(n);
        if (it == logs.end()) {
            throw Error(Errc::MissingNodeLog, "node '" + n + "' has no log; the total would be an undercount");
        }
        total += node_total(node_window_energy(it->second, window).joules);
    }
    return EnergyQuantity::of(total);
}

EnergyQuantity interval_estimate(const std::vector<PowerPoint>& points, const Window& window,
                                 double scrape_interval_s) {
    if (!(scrape_interval_s > 0.0)) throw Error(Errc::InvalidArgument, "scrape interval must be positive");
    if (window.end_wall_ns <= window.start_wall_ns) {
        throw Error(Errc::InvalidArgument, "window length must be positive");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& p : points) {
        if (p.t_wall_ns > window.start_wall_ns && p.t_wall_ns <= window.end_wall_ns) {
            sum += p.watts;
            ++n;
        }
    }
    if (n == 0) throw Error(Errc::NoPointsInWindow, "no power points inside the window");
    return EnergyQuantity::of(sum * scrape_interval_s);
}

EnergyQuantity interval_estimate_corrected(const std::vector<PowerPoint>& points,
                                           const Window& window, double scrape_interval_s) {
    if (!(scrape_interval_s > 0.0)) throw Error(Errc::InvalidArgument, "scrape interval must be positive");
    if (window.end_wall_ns <= window.start_wall_ns) {
        throw Error(Errc::InvalidArgument, "window length must be positive");
    }
    const auto interval_ns = static_cast<std::int64_t>(std::llround(scrape_interval_s * 1e9));
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& p : points) {
        const std::int64_t lo = std::max(p.t_wall_ns - interval_ns, window.start_wall_ns);
        const std::int64_t hi = std::min(p.t_wall_ns, window.end_wall_ns);
        if (hi <= lo) continue;
        sum += p.watts * static_cast<double>(hi - lo) * 1e-9;
        ++n;
    }
    if (n == 0) throw Error(Errc::NoPointsInWindow, "no power points overlap the window");
    return EnergyQuantity::of(sum);
}

double coverage_compare(const EnergyQuantity& ground_truth, const EnergyQuantity& measured) {
    if (!(ground_truth.joules > 0.0)) {
        throw Error(Errc::DivisionByZeroEnergy, "reference energy must be positive");
    }
    return measured.joules / ground_truth.joules;
}

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::ShellWrap: return "shell_wrap";
        case Method::SignalWorkflow: return "signal_workflow";
        case Method::SignalPlugin: return "signal_plugin";
        case Method::IntervalScrape: return "interval_scrape";
    }
    return "shell_wrap";
}

std::optional<Method> parse_method(std::string_view s) noexcept {
    for (Method m : {Method::ShellWrap, Method::SignalWorkflow, Method::SignalPlugin, Method::IntervalScrape}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

namespace {

json domains_to_json(const DomainJoules& j) {
    json out = json::object();
    for (const auto& [d, v] : j) out[std::string(to_string(d))] = v;
    return out;
}

DomainJoules domains_from_json(const json& j, const std::string& path) {
    DomainJoules out;
    if (!j.is_object()) throw Error(Errc::SchemaViolation, path + ": expected object");
    for (const auto& [k, v] : j.items()) {
        const auto d = parse_domain(k);
        if (!d || !v.is_number()) throw Error(Errc::SchemaViolation, path + "." + k + ": bad domain entry");
        out[*d] = v.get<double>();
    }
    return out;
}

}  // namespace

json report_to_json(const EnergyReport& r) {
    json doc;
    doc["report_version"] = EnergyReport::kVersion;
    doc["workflow_id"] = r.workflow_id;
    doc["method"] = std::string(to_string(r.method));
    doc["status"] = r.status;
    doc["total_joules"] = r.total_joules;
    if (r.coverage_fraction) doc["coverage_fraction"] = *r.coverage_fraction;
    if (r.window) {
        doc["window"] = {{"start_wall_ns", r.window->start_wall_ns}, {"end_wall_ns", r.window->end_wall_ns}};
    }
    json per_node = json::object();
    json node_totals = json::object();
    for (const auto& [n, j] : r.per_node) {
        per_node[n] = domains_to_json(j);
        node_totals[n] = node_total(j);
    }
    doc["per_node"] = std::move(per_node);
    doc["node_totals"] = std::move(node_totals);
    json unatt = json::object();
    for (const auto& [n, j] : r.unattributed) unatt[n] = domains_to_json(j);
    doc["unattributed"] = std::move(unatt);
    json tasks = json::array();
    for (const auto& t : r.per_task) {
        tasks.push_back({{"task_id", t.task_id},
                         {"node_id", t.node_id},
                         {"joules", domains_to_json(t.joules_by_domain)},
                         {"total_joules", t.total()},
                         {"estimated", t.estimated},
                         {"notes", json(std::vector<std::string>(t.notes.begin(), t.notes.end()))}});
    }
    doc["per_task"] = std::move(tasks);
    doc["diagnostics"] = r.diagnostics;
    doc["extra"] = r.extra;
    return doc;
}

EnergyReport report_from_json(const json& doc) {
    if (!doc.is_object()) throw Error(Errc::SchemaViolation, "$: expected object");
    const auto need = [&](const char* key) -> const json& {
        auto it = doc.find(key);
        if (it == doc.end()) throw Error(Errc::SchemaViolation, std::string("$.") + key + ": missing");
        return *it;
    };
    if (need("report_version") != EnergyReport::kVersion) {
        throw Error(Errc::SchemaViolation, "$.report_version: unsupported");
    }
    EnergyReport r;
    try {
        r.workflow_id = need("workflow_id").get<std::string>();
        const auto m = parse_method(need("method").get<std::string>());
        if (!m) throw Error(Errc::SchemaViolation, "$.method: unknown value");
        r.method = *m;
        r.total_joules = need("total_joules").get<double>();
        if (doc.contains("status")) r.status = doc["status"].get<std::string>();
        if (doc.contains("coverage_fraction")) r.coverage_fraction = doc["coverage_fraction"].get<double>();
        if (doc.contains("window")) {
            r.window = Window{doc["window"].at("start_wall_ns").get<std::int64_t>(),
                              doc["window"].at("end_wall_ns").get<std::int64_t>()};
        }
        if (doc.contains("per_node")) {
            for (const auto& [n, j] : doc["per_node"].items()) r.per_node[n] = domains_from_json(j, "$.per_node." + n);
        }
        if (doc.contains("unattributed")) {
            for (const auto& [n, j] : doc["unattributed"].items()) {
                r.unattributed[n] = domains_from_json(j, "$.unattributed." + n);
            }
        }
        if (doc.contains("per_task")) {
            std::size_t i = 0;
            for (const auto& t : doc["per_task"]) {
                TaskEnergy te;
                te.task_id = t.at("task_id").get<std::string>();
                te.node_id = t.at("node_id").get<std::string>();
                te.joules_by_domain = domains_from_json(t.at("joules"), "$.per_task[" + std::to_string(i) + "].joules");
                te.estimated = t.at("estimated").get<bool>();
                for (const auto& n : t.at("notes")) te.notes.insert(n.get<std::string>());
                r.per_task.push_back(std::move(te));
                ++i;
            }
        }
        if (doc.contains("diagnostics")) r.diagnostics = doc["diagnostics"].get<std::vector<std::string>>();
        if (doc.contains("extra")) r.extra = doc["extra"];
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("report: ") + e.what());
    }
    return r;
}

EnergyReport build_report(const std::map<std::string, NodeEnergyLog>& logs, const WorkflowTrace& trace,
                          const AttributionPolicy& policy, Method method, kernels::Exec exec) {
    policy.validate();
    std::map<std::string, std::vector<TaskRecord>> by_node;
    for (const auto& t : trace.tasks) by_node[t.node_id].push_back(t);
    for (const auto& [n, tasks] : by_node) {
        if (!logs.count(n)) {
            throw Error(Errc::MissingNodeLog, "trace references node '" + n + "' but no log was found for it");
        }
    }

    struct NodeResult {
        DomainJoules energy;
        DomainJoules unattributed;
        std::vector<TaskEnergy> tasks;
        Window span;
        bool unsafe_gap = false;
        std::set<std::string> warnings;
    };
    std::vector<std::string> nodes;
    for (const auto& [n, l] : logs) nodes.push_back(n);
    std::vector<NodeResult> results(nodes.size());

    kernels::for_each_index(nodes.size(), exec, [&](std::size_t i) {
        const NodeEnergyLog& log = logs.at(nodes[i]);
        NodeResult& res = results[i];
        res.span = log.sampled_span();
        const auto tasks_it = by_node.find(nodes[i]);
        const std::vector<TaskRecord> none;
        const std::vector<TaskRecord>& tasks = tasks_it == by_node.end() ? none : tasks_it->second;
        const NodeWindowEnergy whole = node_window_energy(log, res.span);
        res.energy = whole.joules;
        res.unsafe_gap = whole.unsafe_gap;
        if (tasks.empty()) {
            res.unattributed = res.energy;
            return;
        }
        Attribution att = attribute_concurrent(tasks, log, policy, res.span);
        res.tasks = std::move(att.tasks);
        res.unattributed = std::move(att.unattributed);
        res.warnings = std::move(att.warnings);
    });

    EnergyReport report;
    report.workflow_id = trace.workflow_id;
    report.method = method;
    std::map<std::string, TaskEnergy> task_map;
    Window span{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::min()};
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        NodeResult& res = results[i];
        report.per_node[nodes[i]] = res.energy;
        report.unattributed[nodes[i]] = res.unattributed;
        report.total_joules += node_total(res.energy);
        span.start_wall_ns = std::min(span.start_wall_ns, res.span.start_wall_ns);
        span.end_wall_ns = std::max(span.end_wall_ns, res.span.end_wall_ns);
        if (res.unsafe_gap) report.diagnostics.push_back("node '" + nodes[i] + "': unsafe sampling gap");
        for (const auto& w : res.warnings) report.diagnostics.push_back("node '" + nodes[i] + "': " + w);
        for (auto& t : res.tasks) task_map.emplace(t.task_id, std::move(t));
    }
    if (!nodes.empty()) report.window = span;
    for (const auto& t : trace.tasks) {
        auto it = task_map.find(t.task_id);
        if (it != task_map.end()) report.per_task.push_back(it->second);
    }
    for (const auto& id : trace.out_of_bounds_tasks) {
        report.diagnostics.push_back("task '" + id + "' lies outside the workflow bounds");
    }
    report.extra["policy"] = std::string(to_string(policy.kind));
    if (policy.idle_baseline_watts) report.extra["idle_baseline_watts"] = *policy.idle_baseline_watts;
    return report;
}

}  // namespace wattflow
