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

#include "wattflow/trace.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "wattflow/error.hpp"

namespace wattflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') cells.back().pop_back();
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

double to_double(std::string_view s) {
    const std::string copy(s);
    char* end = nullptr;
    const double v = std::strtod(copy.c_str(), &end);
    if (copy.empty() || end != copy.c_str() + copy.size() || !std::isfinite(v)) {
        throw Error(Errc::ParseError, "not a number: '" + copy + "'");
    }
    return v;
}

std::int64_t to_int(std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(Errc::ParseError, "not an integer: '" + std::string(s) + "'");
    }
    return v;
}

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

TaskStatus parse_status(std::string_view s) {
    std::string up(s);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "COMPLETED") return TaskStatus::Completed;
    if (up == "FAILED" || up == "ABORTED") return TaskStatus::Failed;
    if (up == "CACHED") return TaskStatus::Cached;
    throw Error(Errc::ParseError, "unknown status '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(TaskStatus s) noexcept {
    switch (s) {
        case TaskStatus::Completed: return "completed";
        case TaskStatus::Failed: return "failed";
        case TaskStatus::Cached: return "cached";
    }
    return "completed";
}

double parse_duration_ms(std::string_view cell) {
    cell = trim(cell);
    if (cell == "-" || cell.empty()) return 0.0;
    if (all_digits(cell)) return static_cast<double>(to_int(cell));
    double total = 0.0;
    std::istringstream in{std::string(cell)};
    std::string tok;
    while (in >> tok) {
        std::size_t i = 0;
        while (i < tok.size() && (std::isdigit(static_cast<unsigned char>(tok[i])) || tok[i] == '.')) ++i;
        if (i == 0) throw Error(Errc::ParseError, "bad duration '" + std::string(cell) + "'");
        const double v = to_double(std::string_view(tok).substr(0, i));
        const std::string unit = tok.substr(i);
        if (unit == "ms") total += v;
        else if (unit == "s") total += v * 1e3;
        else if (unit == "m") total += v * 60e3;
        else if (unit == "h") total += v * 3600e3;
        else if (unit == "d") total += v * 86400e3;
        else throw Error(Errc::ParseError, "bad duration unit in '" + std::string(cell) + "'");
    }
    return total;
}

std::int64_t parse_timestamp_ns(std::string_view cell) {
    cell = trim(cell);
    if (all_digits(cell)) return to_int(cell) * 1'000'000;
    // YYYY-MM-DD HH:MM:SS[.fff]
    if (cell.size() < 19 || cell[4] != '-' || cell[7] != '-' || (cell[10] != ' ' && cell[10] != 'T') ||
        cell[13] != ':' || cell[16] != ':') {
        throw Error(Errc::ParseError, "bad timestamp '" + std::string(cell) + "'");
    }
    const auto num = [&](std::size_t pos, std::size_t len) {
        const auto part = cell.substr(pos, len);
        if (!all_digits(part)) throw Error(Errc::ParseError, "bad timestamp '" + std::string(cell) + "'");
        return to_int(part);
    };
    const std::int64_t y = num(0, 4), mo = num(5, 2), d = num(8, 2);
    const std::int64_t h = num(11, 2), mi = num(14, 2), s = num(17, 2);
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
        throw Error(Errc::ParseError, "bad timestamp '" + std::string(cell) + "'");
    }
    std::int64_t frac_ns = 0;
    if (cell.size() > 19) {
        if (cell[19] != '.') throw Error(Errc::ParseError, "bad timestamp '" + std::string(cell) + "'");
        const auto frac = cell.substr(20);
        if (!all_digits(frac) || frac.size() > 9) {
            throw Error(Errc::ParseError, "bad timestamp '" + std::string(cell) + "'");
        }
        frac_ns = to_int(frac);
        for (std::size_t i = frac.size(); i < 9; ++i) frac_ns *= 10;
    }
    const std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
    return ((days * 86400 + h * 3600 + mi * 60 + s) * 1'000'000'000) + frac_ns;
}

TraceColumns TraceColumns::from_json(const json& mapping) {
    TraceColumns c;
    const std::map<std::string, std::string*> fields{
        {"task_id", &c.task_id},   {"name", &c.name},         {"status", &c.status},
        {"start", &c.start},       {"complete", &c.complete}, {"realtime", &c.realtime},
        {"%cpu", &c.cpu_percent},  {"hostname", &c.hostname}, {"submit", &c.submit}};
    for (const auto& [key, value] : mapping.items()) {
        auto it = fields.find(key);
        if (it == fields.end() || !value.is_string()) {
            throw Error(Errc::InvalidArgument, "unknown column mapping '" + key + "'");
        }
        *it->second = value.get<std::string>();
    }
    return c;
}

void check_bounds(WorkflowTrace& trace) {
    trace.out_of_bounds_tasks.clear();
    for (const auto& t : trace.tasks) {
        if (t.start_wall_ns < trace.submitted_wall_ns || t.end_wall_ns > trace.finished_wall_ns) {
            trace.out_of_bounds_tasks.push_back(t.task_id);
        }
    }
}

WorkflowTrace parse_nextflow_trace_text(const std::string& text, const std::string& source_name,
                                        const std::string& workflow_id, const TraceColumns& columns) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) header = split_tabs(line);
    }
    if (header.empty()) throw Error(Errc::EmptyTrace, source_name + ": no header row");

    const auto col = [&](const std::string& name, bool required) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) throw Error(Errc::MissingColumn, source_name + ": missing column '" + name + "'");
            return -1;
        }
        return it - header.begin();
    };
    const auto c_id = col(columns.task_id, true);
    const auto c_name = col(columns.name, true);
    const auto c_status = col(columns.status, true);
    const auto c_start = col(columns.start, true);
    const auto c_complete = col(columns.complete, true);
    const auto c_realtime = col(columns.realtime, true);
    const auto c_cpu = col(columns.cpu_percent, true);
    const auto c_host = col(columns.hostname, false);
    const auto c_submit = col(columns.submit, false);

    WorkflowTrace trace;
    trace.workflow_id = workflow_id;
    std::int64_t first = std::numeric_limits<std::int64_t>::max();
    std::int64_t last = std::numeric_limits<std::int64_t>::min();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_tabs(line);
        const std::string where = source_name + ": row " + std::to_string(row) + " (line " +
                                  std::to_string(lineno) + ")";
        if (cells.size() != header.size()) {
            throw Error(Errc::RowParse, where + ": expected " + std::to_string(header.size()) +
                                            " cells, found " + std::to_string(cells.size()));
        }
        const auto cell = [&](std::ptrdiff_t i) { return std::string(trim(cells[static_cast<std::size_t>(i)])); };
        const auto field = [&](std::ptrdiff_t i, const std::string& cname, auto&& fn) {
            try {
                return fn(cell(i));
            } catch (const Error& e) {
                throw Error(Errc::RowParse, where + ", column '" + cname + "': " + e.what());
            }
        };
        TaskRecord t;
        t.task_id = cell(c_id);
        t.name = cell(c_name);
        t.status = field(c_status, columns.status, [](const std::string& s) { return parse_status(s); });
        t.start_wall_ns = field(c_start, columns.start, [](const std::string& s) { return parse_timestamp_ns(s); });
        t.end_wall_ns = field(c_complete, columns.complete, [](const std::string& s) { return parse_timestamp_ns(s); });
        if (t.end_wall_ns < t.start_wall_ns) {
            throw Error(Errc::RowParse, where + ": complete precedes start");
        }
        t.sub_resolution = t.end_wall_ns == t.start_wall_ns;
        const double realtime_s =
            field(c_realtime, columns.realtime, [](const std::string& s) { return parse_duration_ms(s) / 1e3; });
        const double pct = field(c_cpu, columns.cpu_percent, [](std::string s) {
            if (s == "-" || s.empty()) return 0.0;
            if (s.back() == '%') s.pop_back();
            const double v = to_double(s);
            if (v < 0.0) throw Error(Errc::ParseError, "negative %cpu");
            return v;
        });
        t.cpu_time_s = realtime_s * (pct / 100.0);
        if (c_host >= 0 && !cell(c_host).empty() && cell(c_host) != "-") {
            t.node_id = cell(c_host);
        } else {
            t.node_id = "unknown";
            t.unknown_node = true;
        }
        std::int64_t submitted = t.start_wall_ns;
        if (c_submit >= 0 && cell(c_submit) != "-" && !cell(c_submit).empty()) {
            submitted = std::min(submitted, field(c_submit, columns.submit,
                                                  [](const std::string& s) { return parse_timestamp_ns(s); }));
        }
        first = std::min(first, submitted);
        last = std::max(last, t.end_wall_ns);
        trace.tasks.push_back(std::move(t));
    }
    if (trace.tasks.empty()) throw Error(Errc::EmptyTrace, source_name + ": header but no task rows");
    trace.submitted_wall_ns = first;
    trace.finished_wall_ns = last;
    check_bounds(trace);
    return trace;
}

WorkflowTrace parse_nextflow_trace(const fs::path& path, const TraceColumns& columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::NotFound, "cannot open trace " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_nextflow_trace_text(buf.str(), path.string(), path.stem().string(), columns);
}

// ---------------------------------------------------------------------------
// Generic JSON traces

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw Error(Errc::SchemaViolation, path + ": expected object");
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(Errc::SchemaViolation, path + "." + key + ": missing");
    return *it;
}

std::string get_string(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_string()) throw Error(Errc::SchemaViolation, path + "." + key + ": expected string");
    return v.get<std::string>();
}

std::int64_t get_int(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_number_integer()) throw Error(Errc::SchemaViolation, path + "." + key + ": expected integer");
    return v.get<std::int64_t>();
}

}  // namespace

WorkflowTrace trace_from_json(const json& doc) {
    WorkflowTrace trace;
    trace.workflow_id = get_string(doc, "workflow_id", "$");
    trace.submitted_wall_ns = get_int(doc, "submitted_wall_ns", "$");
    trace.finished_wall_ns = get_int(doc, "finished_wall_ns", "$");
    const json& tasks = require(doc, "tasks", "$");
    if (!tasks.is_array()) throw Error(Errc::SchemaViolation, "$.tasks: expected array");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const std::string path = "$.tasks[" + std::to_string(i) + "]";
        const json& j = tasks[i];
        TaskRecord t;
        t.task_id = get_string(j, "task_id", path);
        t.name = get_string(j, "name", path);
        t.node_id = get_string(j, "node_id", path);
        t.start_wall_ns = get_int(j, "start_wall_ns", path);
        t.end_wall_ns = get_int(j, "end_wall_ns", path);
        if (t.end_wall_ns < t.start_wall_ns) {
            throw Error(Errc::SchemaViolation, path + ".end_wall_ns: precedes start_wall_ns");
        }
        const std::string status = get_string(j, "status", path);
        try {
            t.status = parse_status(status);
        } catch (const Error&) {
            throw Error(Errc::SchemaViolation, path + ".status: unknown value '" + status + "'");
        }
        if (auto it = j.find("cpu_time_s"); it != j.end()) {
            if (!it->is_number() || it->get<double>() < 0.0) {
                throw Error(Errc::SchemaViolation, path + ".cpu_time_s: expected non-negative number");
            }
            t.cpu_time_s = it->get<double>();
        } else {
            t.cpu_time_s = t.wall_seconds();
            t.cpu_time_fallback = true;
        }
        t.sub_resolution = t.start_wall_ns == t.end_wall_ns;
        t.unknown_node = t.node_id == "unknown";
        trace.tasks.push_back(std::move(t));
    }
    check_bounds(trace);
    return trace;
}

json trace_to_json(const WorkflowTrace& trace) {
    json tasks = json::array();
    for (const auto& t : trace.tasks) {
        json j{{"task_id", t.task_id},
               {"name", t.name},
               {"node_id", t.node_id},
               {"start_wall_ns", t.start_wall_ns},
               {"end_wall_ns", t.end_wall_ns},
               {"status", std::string(to_string(t.status))}};
        if (!t.cpu_time_fallback) j["cpu_time_s"] = t.cpu_time_s;
        tasks.push_back(std::move(j));
    }
    return json{{"workflow_id", trace.workflow_id},
                {"submitted_wall_ns", trace.submitted_wall_ns},
                {"finished_wall_ns", trace.finished_wall_ns},
                {"tasks", std::move(tasks)}};
}

WorkflowTrace parse_generic_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::NotFound, "cannot open trace " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::SchemaViolation, path.string() + ": $: " + e.what());
    }
    try {
        return trace_from_json(doc);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

}  // namespace wattflow
