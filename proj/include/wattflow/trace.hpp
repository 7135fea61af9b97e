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

namespace wattflow {

enum class TaskStatus { Completed, Failed, Cached };

std::string_view to_string(TaskStatus s) noexcept;

struct TaskRecord {
    std::string task_id;
    std::string name;
    std::string node_id;
    std::int64_t start_wall_ns = 0;
    std::int64_t end_wall_ns = 0;
    double cpu_time_s = 0.0;
    TaskStatus status = TaskStatus::Completed;

    /// Start and end were logged as the same instant.
    bool sub_resolution = false;
    /// No hostname column; node_id is "unknown".
    bool unknown_node = false;
    /// CPU time was absent and defaulted to the wall duration.
    bool cpu_time_fallback = false;

    double wall_seconds() const noexcept {
        return static_cast<double>(end_wall_ns - start_wall_ns) * 1e-9;
    }

    bool operator==(const TaskRecord&) const = default;
};

struct WorkflowTrace {
    std::string workflow_id;
    std::vector<TaskRecord> tasks;
    std::int64_t submitted_wall_ns = 0;
    std::int64_t finished_wall_ns = 0;
    /// Tasks whose interval leaves [submitted, finished]; kept, only reported.
    std::vector<std::string> out_of_bounds_tasks;

    bool operator==(const WorkflowTrace&) const = default;
};

/// Column names for the engine trace; any can be overridden.
struct TraceColumns {
    std::string task_id = "task_id";
    std::string name = "name";
    std::string status = "status";
    std::string start = "start";
    std::string complete = "complete";
    std::string realtime = "realtime";
    std::string cpu_percent = "%cpu";
    std::string hostname = "hostname";
    std::string submit = "submit";

    static TraceColumns from_json(const nlohmann::json& mapping);
};

/// Parses a tab-separated Nextflow trace. Timestamps may be epoch
/// milliseconds or `YYYY-MM-DD HH:MM:SS[.mmm]` (read as UTC); durations may be
/// milliseconds or the human form (`1h 2m 3s`, `850ms`).
WorkflowTrace parse_nextflow_trace(const std::filesystem::path& path,
                                   const TraceColumns& columns = {});
WorkflowTrace parse_nextflow_trace_text(const std::string& text, const std::string& source_name,
                                        const std::string& workflow_id,
                                        const TraceColumns& columns = {});

WorkflowTrace parse_generic_trace(const std::filesystem::path& path);
WorkflowTrace trace_from_json(const nlohmann::json& doc);
nlohmann::json trace_to_json(const WorkflowTrace& trace);

/// Milliseconds from a Nextflow duration cell. Throws ParseError.
double parse_duration_ms(std::string_view cell);
/// Wall ns from a Nextflow timestamp cell. Throws ParseError.
std::int64_t parse_timestamp_ns(std::string_view cell);

/// Flags tasks whose interval leaves the workflow bounds.
void check_bounds(WorkflowTrace& trace);

}  // namespace wattflow
