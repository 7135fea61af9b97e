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

#include "wattflow/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "wattflow/error.hpp"

namespace wattflow::sim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTimeEps = 1e-9;

double top_level_share(const std::vector<DomainShare>& domains) {
    DomainJoules shares;
    for (const auto& d : domains) shares[d.spec.domain] = d.share;
    return node_total(shares);
}

std::uint64_t mix_seed(std::uint64_t seed, std::size_t node, RaplDomain d) {
    if (seed == 0) return 0;
    // splitmix64 finalizer over the combined key
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (node + 1) + 0xBF58476D1CE4E5B9ULL * static_cast<std::uint64_t>(d);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z == 0 ? 1 : z;
}

}  // namespace

void PowerProfile::validate() const {
    if (node_id.empty()) throw Error(Errc::InvalidArgument, "profile without node id");
    if (!(span_s > 0.0) || !std::isfinite(span_s)) {
        throw Error(Errc::InvalidArgument, "profile '" + node_id + "' needs a positive span");
    }
    if (!(idle_watts >= 0.0) || !std::isfinite(idle_watts)) {
        throw Error(Errc::InvalidArgument, "profile '" + node_id + "' idle power must be non-negative");
    }
    for (const auto& l : task_loads) {
        if (!(l.watts >= 0.0) || !std::isfinite(l.watts)) {
            throw Error(Errc::InvalidArgument, "load '" + l.task_id + "' power must be non-negative");
        }
        if (!(l.start_s >= 0.0) || !(l.end_s >= l.start_s) || l.end_s > span_s + kTimeEps) {
            throw Error(Errc::InvalidArgument, "load '" + l.task_id + "' lies outside the profile span");
        }
    }
}

double PowerProfile::power_at(double t_s) const {
    double p = idle_watts;
    for (const auto& l : task_loads) {
        if (t_s >= l.start_s && t_s < l.end_s) p += l.watts;
    }
    return p;
}

std::vector<double> PowerProfile::breakpoints() const {
    std::vector<double> pts{0.0, span_s};
    for (const auto& l : task_loads) {
        pts.push_back(l.start_s);
        pts.push_back(l.end_s);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

MockProfile PowerProfile::to_mock(const CounterSpec& spec, double share, std::uint64_t seed) const {
    MockProfile m;
    m.spec = spec;
    m.seed = seed;
    const auto pts = breakpoints();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double dur = pts[i + 1] - pts[i];
        if (dur <= 0.0) continue;
        m.segments.push_back({dur, power_at(0.5 * (pts[i] + pts[i + 1])) * share});
    }
    return m;
}

double analytic_energy(const PowerProfile& profile, double start_s, double end_s) {
    if (start_s < -kTimeEps) {
        throw Error(Errc::WindowBeforeSeries, "window starts before profile of '" + profile.node_id + "'");
    }
    if (end_s > profile.span_s + kTimeEps) {
        throw Error(Errc::WindowAfterSeries, "window ends after profile of '" + profile.node_id + "'");
    }
    if (end_s < start_s) throw Error(Errc::InvalidArgument, "window end precedes start");
    double e = profile.idle_watts * (end_s - start_s);
    for (const auto& l : profile.task_loads) {
        const double overlap = std::min(end_s, l.end_s) - std::max(start_s, l.start_s);
        if (overlap > 0.0) e += l.watts * overlap;
    }
    return e;
}

std::int64_t Scenario::wall_ns(double t_s) const { return epoch_wall_ns + std::llround(t_s * 1e9); }

double Scenario::seconds(std::int64_t wall) const { return static_cast<double>(wall - epoch_wall_ns) * 1e-9; }

void Scenario::validate() const {
    if (profiles.empty()) throw Error(Errc::InvalidArgument, "scenario has no node profiles");
    if (domains.empty()) throw Error(Errc::InvalidArgument, "scenario has no counter domains");
    if (sample_interval_ms <= 0) throw Error(Errc::InvalidArgument, "sample interval must be positive");
    std::set<RaplDomain> seen_domains;
    for (const auto& d : domains) {
        d.spec.validate();
        if (!seen_domains.insert(d.spec.domain).second) {
            throw Error(Errc::InvalidArgument, "duplicate domain in scenario");
        }
        if (!(d.share >= 0.0) || !std::isfinite(d.share)) {
            throw Error(Errc::InvalidArgument, "domain share must be non-negative");
        }
        if (d.spec.update_period_s > static_cast<double>(sample_interval_ms) * 1e-3 / 10.0) {
            throw Error(Errc::InvalidArgument, "counter update period must be at most a tenth of the sampling interval");
        }
    }
    const auto& t = method_timing;
    if (t.shell_lead_s < 0 || t.plugin_delay_s < 0 || t.taskmethod_delay_s < 0) {
        throw Error(Errc::InvalidArgument, "method delays must be non-negative");
    }
    if (!(t.scrape_interval_s > 0.0)) throw Error(Errc::InvalidArgument, "scrape interval must be positive");
    if (!(workflow_end_s > workflow_start_s)) throw Error(Errc::InvalidArgument, "workflow must have positive runtime");

    std::map<std::string, const TaskLoad*> loads;
    std::map<std::string, std::string> load_node;
    std::set<std::string> nodes;
    for (const auto& p : profiles) {
        p.validate();
        if (!nodes.insert(p.node_id).second) throw Error(Errc::InvalidArgument, "duplicate node '" + p.node_id + "'");
        if (workflow_start_s < 0.0 || workflow_end_s > p.span_s + kTimeEps) {
            throw Error(Errc::InvalidArgument, "workflow window exceeds profile span of '" + p.node_id + "'");
        }
        for (const auto& l : p.task_loads) {
            if (!loads.emplace(l.task_id, &l).second) {
                throw Error(Errc::InvalidArgument, "duplicate task load '" + l.task_id + "'");
            }
            load_node[l.task_id] = p.node_id;
        }
    }
    if (trace.tasks.size() != loads.size()) {
        throw Error(Errc::InvalidArgument, "trace and task loads disagree on the number of tasks");
    }
    for (const auto& task : trace.tasks) {
        auto it = loads.find(task.task_id);
        if (it == loads.end()) throw Error(Errc::InvalidArgument, "trace task '" + task.task_id + "' has no load");
        if (load_node[task.task_id] != task.node_id) {
            throw Error(Errc::InvalidArgument, "trace task '" + task.task_id + "' is on another node than its load");
        }
        const auto close = [](std::int64_t a, std::int64_t b) { return std::llabs(a - b) <= 1'000'000; };
        if (!close(task.start_wall_ns, wall_ns(it->second->start_s)) ||
            !close(task.end_wall_ns, wall_ns(it->second->end_s))) {
            throw Error(Errc::InvalidArgument, "trace task '" + task.task_id + "' window differs from its load");
        }
    }
}

WorkflowTrace derive_trace(const std::vector<PowerProfile>& profiles, const std::string& workflow_id,
                           std::int64_t epoch_wall_ns, double workflow_start_s, double workflow_end_s) {
    WorkflowTrace trace;
    trace.workflow_id = workflow_id;
    const auto wall = [&](double t) { return epoch_wall_ns + std::llround(t * 1e9); };
    trace.submitted_wall_ns = wall(workflow_start_s);
    trace.finished_wall_ns = wall(workflow_end_s);
    for (const auto& p : profiles) {
        for (const auto& l : p.task_loads) {
            TaskRecord t;
            t.task_id = l.task_id;
            t.name = l.task_id;
            t.node_id = p.node_id;
            t.start_wall_ns = wall(l.start_s);
            t.end_wall_ns = wall(l.end_s);
            t.cpu_time_s = l.cpu_rate * (l.end_s - l.start_s);
            t.sub_resolution = t.start_wall_ns == t.end_wall_ns;
            trace.tasks.push_back(std::move(t));
        }
    }
    std::stable_sort(trace.tasks.begin(), trace.tasks.end(), [](const TaskRecord& a, const TaskRecord& b) {
        return a.start_wall_ns < b.start_wall_ns;
    });
    check_bounds(trace);
    return trace;
}

Scenario uniform_load_scenario(const std::string& workflow_id, std::size_t nodes, double runtime_s,
                               double watts, double idle_watts, double margin_s, MethodTiming timing) {
    Scenario s;
    s.method_timing = timing;
    s.workflow_start_s = margin_s;
    s.workflow_end_s = margin_s + runtime_s;
    CounterSpec spec;
    spec.domain = RaplDomain::Package;
    spec.bit_width = 32;
    spec.energy_unit_joules = 1e-6;
    s.domains.push_back({spec, 1.0});
    for (std::size_t n = 0; n < nodes; ++n) {
        PowerProfile p;
        p.node_id = "node" + std::to_string(n + 1);
        p.idle_watts = idle_watts;
        p.span_s = runtime_s + 2.0 * margin_s;
        p.task_loads.push_back({workflow_id + "_" + p.node_id, s.workflow_start_s, s.workflow_end_s,
                                watts - idle_watts, 1.0});
        s.profiles.push_back(std::move(p));
    }
    s.trace = derive_trace(s.profiles, workflow_id, s.epoch_wall_ns, s.workflow_start_s, s.workflow_end_s);
    return s;
}

GroundTruth ground_truth(const Scenario& s) {
    s.validate();
    GroundTruth g;
    const double share = top_level_share(s.domains);
    for (const auto& p : s.profiles) {
        const double e = analytic_energy(p, s.workflow_start_s, s.workflow_end_s) * share;
        g.per_node_joules[p.node_id] = e;
        g.total_joules += e;
        for (const auto& l : p.task_loads) g.per_task_joules[l.task_id] = l.watts * (l.end_s - l.start_s) * share;
    }
    return g;
}

std::map<std::string, NodeEnergyLog> synthesize_counters(const Scenario& s, kernels::Exec exec) {
    s.validate();
    std::map<std::string, NodeEnergyLog> logs;
    const std::int64_t interval_ns = s.sample_interval_ms * 1'000'000;
    for (std::size_t n = 0; n < s.profiles.size(); ++n) {
        const PowerProfile& p = s.profiles[n];
        const auto span_ns = std::llround(p.span_s * 1e9);
        std::vector<std::int64_t> times;
        for (std::int64_t t = 0; t <= span_ns; t += interval_ns) times.push_back(t);
        if (times.back() != span_ns) times.push_back(span_ns);

        NodeEnergyLog log;
        log.node_id = p.node_id;
        for (const auto& d : s.domains) {
            const MockProfile mock = p.to_mock(d.spec, d.share, mix_seed(s.seed, n, d.spec.domain));
            const auto raw = kernels::synthesize_raw(mock, times, exec);
            SampleSeries series;
            series.node_id = p.node_id;
            series.spec = d.spec;
            series.epoch_wall_ns = s.epoch_wall_ns;
            series.samples.reserve(times.size());
            for (std::size_t i = 0; i < times.size(); ++i) series.samples.push_back({times[i], raw[i]});
            log.series_by_domain.emplace(d.spec.domain, std::move(series));
        }
        logs.emplace(p.node_id, std::move(log));
    }
    return logs;
}

std::vector<PowerPoint> scrape_points(const Scenario& s) {
    std::vector<PowerPoint> points;
    const double interval = s.method_timing.scrape_interval_s;
    const double share = top_level_share(s.domains);
    for (const auto& p : s.profiles) {
        const double k0 = std::ceil((interval - s.method_timing.scrape_offset_s) / interval - kTimeEps);
        for (double k = k0;; k += 1.0) {
            const double t = s.method_timing.scrape_offset_s + k * interval;
            if (t > p.span_s + kTimeEps) break;
            const double lo = std::max(0.0, t - interval);
            const double watts = analytic_energy(p, lo, std::min(t, p.span_s)) / interval * share;
            points.push_back({s.wall_ns(t), watts});
        }
    }
    std::stable_sort(points.begin(), points.end(),
                     [](const PowerPoint& a, const PowerPoint& b) { return a.t_wall_ns < b.t_wall_ns; });
    return points;
}

Evaluation evaluate_methods(const Scenario& s, const std::map<std::string, NodeEnergyLog>& logs,
                            kernels::Exec exec) {
    s.validate();
    Evaluation ev;
    ev.truth = ground_truth(s);
    std::vector<std::string> nodes;
    for (const auto& p : s.profiles) nodes.push_back(p.node_id);
    const double span = s.profiles.front().span_s;
    const auto& mt = s.method_timing;
    const double ws = s.workflow_start_s;
    const double we = s.workflow_end_s;

    const auto counter_report = [&](Method m, double a, double b) {
        a = std::clamp(a, 0.0, span);
        b = std::clamp(b, 0.0, span);
        if (b < a) b = a;
        EnergyReport r;
        r.workflow_id = s.trace.workflow_id;
        r.method = m;
        r.window = Window{s.wall_ns(a), s.wall_ns(b)};
        std::vector<NodeWindowEnergy> per(nodes.size());
        kernels::for_each_index(nodes.size(), exec, [&](std::size_t i) {
            per[i] = node_window_energy(logs.at(nodes[i]), *r.window);
        });
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            r.per_node[nodes[i]] = per[i].joules;
            r.total_joules += node_total(per[i].joules);
            if (per[i].unsafe_gap) r.diagnostics.push_back("node '" + nodes[i] + "': unsafe sampling gap");
        }
        return r;
    };

    ev.reports[Method::ShellWrap] = counter_report(Method::ShellWrap, ws - mt.shell_lead_s, we + mt.shell_lead_s);
    ev.reports[Method::SignalPlugin] = counter_report(Method::SignalPlugin, ws + mt.plugin_delay_s, we);
    ev.reports[Method::SignalWorkflow] = counter_report(Method::SignalWorkflow, ws + mt.taskmethod_delay_s, we);

    {
        EnergyReport r;
        r.workflow_id = s.trace.workflow_id;
        r.method = Method::IntervalScrape;
        r.window = Window{s.wall_ns(ws), s.wall_ns(we)};
        const auto points = scrape_points(s);
        try {
            r.total_joules = interval_estimate(points, *r.window, mt.scrape_interval_s).joules;
        } catch (const Error& e) {
            if (e.code() != Errc::NoPointsInWindow) throw;
            r.status = "partial";
            r.diagnostics.push_back(e.what());
        }
        r.extra["scrape_interval_s"] = mt.scrape_interval_s;
        r.extra["points_in_window"] = std::count_if(points.begin(), points.end(), [&](const PowerPoint& p) {
            return p.t_wall_ns > r.window->start_wall_ns && p.t_wall_ns <= r.window->end_wall_ns;
        }) / static_cast<long>(nodes.size());
        ev.reports[Method::IntervalScrape] = std::move(r);
    }

    const double shell = ev.reports[Method::ShellWrap].total_joules;
    for (Method m : {Method::ShellWrap, Method::SignalPlugin, Method::SignalWorkflow, Method::IntervalScrape}) {
        EnergyReport& r = ev.reports[m];
        CoverageRow row;
        row.method = m;
        row.joules = r.total_joules;
        row.coverage = coverage_compare(EnergyQuantity{ev.truth.total_joules}, EnergyQuantity{r.total_joules});
        row.percent_of_shell = shell > 0.0 ? 100.0 * r.total_joules / shell : 0.0;
        row.window = *r.window;
        r.coverage_fraction = row.coverage;
        ev.rows.push_back(row);
    }

    AttributionPolicy policy;
    ev.task_report = build_report(logs, s.trace, policy, Method::ShellWrap, exec);
    return ev;
}

Evaluation evaluate_methods(const Scenario& s, kernels::Exec exec) {
    return evaluate_methods(s, synthesize_counters(s, exec), exec);
}

std::string coverage_table_text(const Evaluation& e) {
    std::string out = "method            joules            coverage    % of shell\n";
    char buf[160];
    for (const auto& r : e.rows) {
        std::snprintf(buf, sizeof(buf), "%-17s %-17.2f %-11.4f %.2f\n", std::string(to_string(r.method)).c_str(),
                      r.joules, r.coverage, r.percent_of_shell);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "ground truth      %.2f\n", e.truth.total_joules);
    out += buf;
    return out;
}

json coverage_table_json(const Evaluation& e) {
    json rows = json::array();
    for (const auto& r : e.rows) {
        rows.push_back({{"method", std::string(to_string(r.method))},
                        {"joules", r.joules},
                        {"coverage", r.coverage},
                        {"percent_of_shell", r.percent_of_shell},
                        {"window", {{"start_wall_ns", r.window.start_wall_ns}, {"end_wall_ns", r.window.end_wall_ns}}}});
    }
    return json{{"ground_truth_joules", e.truth.total_joules},
                {"per_node_truth", e.truth.per_node_joules},
                {"per_task_truth", e.truth.per_task_joules},
                {"rows", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

CounterSpec spec_from_json(const json& j) {
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

json spec_to_json(const CounterSpec& c) {
    json j{{"domain", std::string(to_string(c.domain))},
           {"bit_width", c.bit_width},
           {"unit_j", c.energy_unit_joules},
           {"update_period_s", c.update_period_s}};
    if (c.modulus_override) j["modulus"] = *c.modulus_override;
    return j;
}

}  // namespace

Scenario scenario_from_json(const json& doc) {
    Scenario s;
    try {
        s.seed = doc.value("seed", std::uint64_t{0});
        s.epoch_wall_ns = doc.value("epoch_wall_ns", s.epoch_wall_ns);
        s.sample_interval_ms = doc.value("sample_interval_ms", std::int64_t{500});
        if (doc.contains("domains")) {
            for (const auto& d : doc.at("domains")) s.domains.push_back({spec_from_json(d), d.value("share", 1.0)});
        } else {
            s.domains.push_back({CounterSpec{}, 1.0});
        }
        for (const auto& pj : doc.at("profiles")) {
            PowerProfile p;
            p.node_id = pj.at("node_id").get<std::string>();
            p.idle_watts = pj.value("idle_watts", 0.0);
            p.span_s = pj.value("span_s", doc.value("span_s", 0.0));
            for (const auto& lj : pj.value("task_loads", json::array())) {
                p.task_loads.push_back({lj.at("task_id").get<std::string>(), lj.at("start_s").get<double>(),
                                        lj.at("end_s").get<double>(), lj.at("watts").get<double>(),
                                        lj.value("cpu_rate", 1.0)});
            }
            s.profiles.push_back(std::move(p));
        }
        if (doc.contains("method_timing")) {
            const json& mt = doc["method_timing"];
            s.method_timing.shell_lead_s = mt.value("shell_lead_s", 0.0);
            s.method_timing.plugin_delay_s = mt.value("plugin_delay_s", 0.0);
            s.method_timing.taskmethod_delay_s = mt.value("taskmethod_delay_s", 0.0);
            s.method_timing.scrape_interval_s = mt.value("scrape_interval_s", 30.0);
            s.method_timing.scrape_offset_s = mt.value("scrape_offset_s", 0.0);
        }
        const std::string wf_id = doc.value("workflow_id", std::string("simulated"));
        if (doc.contains("workflow")) {
            s.workflow_start_s = doc["workflow"].at("start_s").get<double>();
            s.workflow_end_s = doc["workflow"].at("end_s").get<double>();
        } else {
            double lo = 1e300, hi = -1e300;
            for (const auto& p : s.profiles) {
                for (const auto& l : p.task_loads) {
                    lo = std::min(lo, l.start_s);
                    hi = std::max(hi, l.end_s);
                }
            }
            if (lo > hi) throw Error(Errc::SchemaViolation, "$.workflow: missing and no task loads to derive it from");
            s.workflow_start_s = lo;
            s.workflow_end_s = hi;
        }
        if (doc.contains("trace")) {
            s.trace = trace_from_json(doc["trace"]);
        } else {
            s.trace = derive_trace(s.profiles, wf_id, s.epoch_wall_ns, s.workflow_start_s, s.workflow_end_s);
        }
    } catch (const json::exception& e) {
        throw Error(Errc::SchemaViolation, std::string("scenario: ") + e.what());
    }
    s.validate();
    return s;
}

json scenario_to_json(const Scenario& s) {
    json domains = json::array();
    for (const auto& d : s.domains) {
        json j = spec_to_json(d.spec);
        j["share"] = d.share;
        domains.push_back(std::move(j));
    }
    json profiles = json::array();
    for (const auto& p : s.profiles) {
        json loads = json::array();
        for (const auto& l : p.task_loads) {
            loads.push_back({{"task_id", l.task_id}, {"start_s", l.start_s}, {"end_s", l.end_s},
                             {"watts", l.watts}, {"cpu_rate", l.cpu_rate}});
        }
        profiles.push_back({{"node_id", p.node_id}, {"idle_watts", p.idle_watts}, {"span_s", p.span_s},
                            {"task_loads", std::move(loads)}});
    }
    const auto& mt = s.method_timing;
    return json{{"seed", s.seed},
                {"epoch_wall_ns", s.epoch_wall_ns},
                {"sample_interval_ms", s.sample_interval_ms},
                {"domains", std::move(domains)},
                {"profiles", std::move(profiles)},
                {"workflow", {{"start_s", s.workflow_start_s}, {"end_s", s.workflow_end_s}}},
                {"method_timing",
                 {{"shell_lead_s", mt.shell_lead_s},
                  {"plugin_delay_s", mt.plugin_delay_s},
                  {"taskmethod_delay_s", mt.taskmethod_delay_s},
                  {"scrape_interval_s", mt.scrape_interval_s},
                  {"scrape_offset_s", mt.scrape_offset_s}}},
                {"trace", trace_to_json(s.trace)}};
}

Evaluation simulate_to_dir(const Scenario& s, const fs::path& out, const std::string& session_id) {
    const auto logs = synthesize_counters(s);
    Evaluation ev = evaluate_methods(s, logs);
    fs::create_directories(out / "logs");
    const auto write_file = [](const fs::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        f << text;
        if (!f) throw Error(Errc::Io, "cannot write " + p.string());
    };
    for (const auto& [node, log] : logs) {
        SessionLog sl;
        sl.node_id = node;
        sl.series = log.series_by_domain;
        sl.status = LogStatus::Complete;
        write_file(log_path(out / "logs", node, session_id), format_log(sl));
    }
    write_file(out / "trace.json", trace_to_json(s.trace).dump(2) + "\n");
    for (const auto& [m, r] : ev.reports) {
        write_file(out / ("report_" + std::string(to_string(m)) + ".json"), report_to_json(r).dump(2) + "\n");
    }
    write_file(out / "report_tasks.json", report_to_json(ev.task_report).dump(2) + "\n");
    write_file(out / "coverage.txt", coverage_table_text(ev));
    write_file(out / "coverage.json", coverage_table_json(ev).dump(2) + "\n");
    return ev;
}

}  // namespace wattflow::sim
