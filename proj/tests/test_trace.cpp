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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "support.hpp"
#include "wattflow/error.hpp"
#include "wattflow/trace.hpp"

using namespace wattflow;
using nlohmann::json;
using wftest::code_of;
using wftest::TempDir;

namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(WATTFLOW_FIXTURES) / "rnaseq" / "trace.txt";
const std::string kHeader = "task_id\tname\tstatus\tstart\tcomplete\trealtime\t%cpu\thostname\n";

std::string what_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("nine-task fixture") {
    const WorkflowTrace t = parse_nextflow_trace(kFixture);
    CHECK(t.workflow_id == "trace");
    REQUIRE(t.tasks.size() == 9);
    CHECK(t.tasks[0].task_id == "1");
    CHECK(t.tasks[0].name == "NFCORE_RNASEQ:FASTQC (sample1)");
    CHECK(t.tasks[0].node_id == "node-a");
    CHECK(t.tasks[0].start_wall_ns == 1'700'000'010'000'000'000);
    CHECK(t.tasks[0].end_wall_ns == 1'700'000'030'000'000'000);
    // realtime 2m at 350% -> 420 s of CPU
    CHECK(t.tasks[1].cpu_time_s == doctest::Approx(420.0).epsilon(1e-12));
    CHECK(t.tasks[5].status == TaskStatus::Failed);
    CHECK(t.tasks[8].status == TaskStatus::Cached);
    int completed = 0;
    for (const auto& r : t.tasks) completed += r.status == TaskStatus::Completed;
    CHECK(completed == 7);
    CHECK(t.tasks[7].sub_resolution);
    for (std::size_t i = 0; i < 9; ++i) {
        if (i != 7) CHECK_FALSE(t.tasks[i].sub_resolution);
    }
    CHECK(t.submitted_wall_ns == 1'700'000'009'000'000'000);
    CHECK(t.finished_wall_ns == 1'700'000'030'000'000'000 + 220'000'000'000);
    CHECK(t.out_of_bounds_tasks.empty());
}

TEST_CASE("duration cells") {
    CHECK(parse_duration_ms("120000") == 120000.0);
    CHECK(parse_duration_ms("2m") == 120000.0);
    CHECK(parse_duration_ms("1h 2m 3s") == 3723000.0);
    CHECK(parse_duration_ms("850ms") == 850.0);
    CHECK(parse_duration_ms("1.5s") == 1500.0);
    CHECK(parse_duration_ms("1d 1h") == 90000000.0);
    CHECK(code_of([] { parse_duration_ms("soon"); }) == Errc::ParseError);
    CHECK(code_of([] { parse_duration_ms("3x"); }) == Errc::ParseError);
}

TEST_CASE("timestamp cells are UTC") {
    CHECK(parse_timestamp_ns("1700000000000") == 1'700'000'000'000'000'000);
    CHECK(parse_timestamp_ns("2023-11-14 22:13:20.000") == 1'700'000'000'000'000'000);
    CHECK(parse_timestamp_ns("2023-11-14 22:13:20") == 1'700'000'000'000'000'000);
    CHECK(parse_timestamp_ns("2023-11-14 22:13:20.5") == 1'700'000'000'500'000'000);
    CHECK(parse_timestamp_ns("1970-01-01 00:00:00.000") == 0);
    CHECK(parse_timestamp_ns("2024-02-29 12:00:00.000") == 1'709'208'000'000'000'000);
    CHECK(code_of([] { parse_timestamp_ns("2023-13-01 00:00:00"); }) == Errc::ParseError);
    CHECK(code_of([] { parse_timestamp_ns("yesterday"); }) == Errc::ParseError);
}

TEST_CASE("missing columns, bad rows and empty traces are named") {
    CHECK(code_of([] { parse_nextflow_trace_text("", "t.txt", "w"); }) == Errc::EmptyTrace);
    CHECK(code_of([] { parse_nextflow_trace_text(kHeader, "t.txt", "w"); }) == Errc::EmptyTrace);
    const std::string no_cpu = "task_id\tname\tstatus\tstart\tcomplete\trealtime\n";
    CHECK(what_of([&] { parse_nextflow_trace_text(no_cpu + "1\ta\tCOMPLETED\t0\t1\t1\n", "t.txt", "w"); })
              .find("'%cpu'") != std::string::npos);
    CHECK(code_of([&] { parse_nextflow_trace_text(no_cpu, "t.txt", "w"); }) == Errc::MissingColumn);

    const std::string ok = "1\ta\tCOMPLETED\t1000\t2000\t1s\t100%\tn1\n";
    const std::string bad = "2\tb\tCOMPLETED\t1000\tlater\t1s\t100%\tn1\n";
    const std::string msg = what_of([&] { parse_nextflow_trace_text(kHeader + ok + bad, "t.txt", "w"); });
    CHECK(msg.find("row-parse") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("'complete'") != std::string::npos);
    CHECK(code_of([&] { parse_nextflow_trace_text(kHeader + "1\ta\n", "t.txt", "w"); }) == Errc::RowParse);
    CHECK(code_of([&] { parse_nextflow_trace_text(kHeader + "1\ta\tDONE\t1\t2\t1\t1\tn\n", "t.txt", "w"); }) ==
          Errc::RowParse);
    CHECK(code_of([&] { parse_nextflow_trace_text(kHeader + "1\ta\tCOMPLETED\t5\t2\t1\t1\tn\n", "t.txt", "w"); }) ==
          Errc::RowParse);
    CHECK(code_of([] { parse_nextflow_trace("/nonexistent/trace.txt"); }) == Errc::NotFound);
}

TEST_CASE("no hostname column: node unknown and flagged") {
    const std::string h = "task_id\tname\tstatus\tstart\tcomplete\trealtime\t%cpu\n";
    const auto t = parse_nextflow_trace_text(h + "1\ta\tCOMPLETED\t1000\t2000\t1000\t-\n", "t", "w");
    CHECK(t.tasks[0].node_id == "unknown");
    CHECK(t.tasks[0].unknown_node);
    CHECK(t.tasks[0].cpu_time_s == 0.0);
}

TEST_CASE("column mapping override") {
    const TraceColumns cols = TraceColumns::from_json(json{{"hostname", "node"}, {"%cpu", "cpu"}});
    const std::string h = "task_id\tname\tstatus\tstart\tcomplete\trealtime\tcpu\tnode\n";
    const auto t = parse_nextflow_trace_text(h + "1\ta\tcompleted\t1000\t3000\t2s\t50\tbox\n", "t", "w", cols);
    CHECK(t.tasks[0].node_id == "box");
    CHECK(t.tasks[0].cpu_time_s == doctest::Approx(1.0));
    CHECK(code_of([] { TraceColumns::from_json(json{{"bogus", "x"}}); }) == Errc::InvalidArgument);
}

TEST_CASE("generic trace: minimal document and cpu fallback") {
    const json doc = {{"workflow_id", "wf"},
                      {"submitted_wall_ns", 0},
                      {"finished_wall_ns", 10'000'000'000},
                      {"tasks",
                       {{{"task_id", "a"},
                         {"name", "A"},
                         {"node_id", "n1"},
                         {"start_wall_ns", 1'000'000'000},
                         {"end_wall_ns", 4'000'000'000},
                         {"status", "completed"}}}}};
    const WorkflowTrace t = trace_from_json(doc);
    REQUIRE(t.tasks.size() == 1);
    CHECK(t.tasks[0].cpu_time_s == doctest::Approx(3.0));
    CHECK(t.tasks[0].cpu_time_fallback);
    // Export keeps the document as given.
    CHECK(trace_to_json(t) == doc);
}

TEST_CASE("generic trace schema errors carry a JSON path") {
    json doc = {{"workflow_id", "wf"}, {"submitted_wall_ns", 0}, {"finished_wall_ns", 1}, {"tasks", json::array()}};
    doc["tasks"].push_back({{"task_id", "a"}, {"name", "A"}, {"node_id", "n"}, {"start_wall_ns", 0},
                            {"end_wall_ns", 1}, {"status", "completed"}});
    doc["tasks"].push_back({{"task_id", "b"}, {"name", "B"}, {"node_id", "n"}, {"start_wall_ns", "zero"},
                            {"end_wall_ns", 1}, {"status", "completed"}});
    const std::string msg = what_of([&] { trace_from_json(doc); });
    CHECK(msg.find("schema-violation") != std::string::npos);
    CHECK(msg.find("$.tasks[1].start_wall_ns") != std::string::npos);
    doc["tasks"][1]["start_wall_ns"] = 0;
    doc["tasks"][1]["status"] = "exploded";
    CHECK(what_of([&] { trace_from_json(doc); }).find("$.tasks[1].status") != std::string::npos);
    doc.erase("tasks");
    CHECK(code_of([&] { trace_from_json(doc); }) == Errc::SchemaViolation);
    CHECK(code_of([&] { trace_from_json(json::array()); }) == Errc::SchemaViolation);
}

TEST_CASE("generic export/import round trip") {
    std::mt19937_64 rng(9);
    for (int round = 0; round < 50; ++round) {
        WorkflowTrace t;
        t.workflow_id = "wf" + std::to_string(round);
        t.submitted_wall_ns = static_cast<std::int64_t>(rng() >> 4);
        std::int64_t last = t.submitted_wall_ns;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            TaskRecord r;
            r.task_id = std::to_string(i);
            r.name = "P" + std::to_string(rng() % 100);
            r.node_id = "node-" + std::to_string(rng() % 3);
            r.start_wall_ns = t.submitted_wall_ns + static_cast<std::int64_t>(rng() % 1'000'000'000'000);
            r.end_wall_ns = r.start_wall_ns + static_cast<std::int64_t>(rng() % 3) * static_cast<std::int64_t>(rng() % 100'000'000'000);
            r.sub_resolution = r.end_wall_ns == r.start_wall_ns;
            r.status = static_cast<TaskStatus>(rng() % 3);
            if (rng() % 4 == 0) {
                r.cpu_time_s = r.wall_seconds();
                r.cpu_time_fallback = true;
            } else {
                r.cpu_time_s = static_cast<double>(rng() % 100000) / 7.0;
            }
            last = std::max(last, r.end_wall_ns);
            t.tasks.push_back(r);
        }
        t.finished_wall_ns = last;
        check_bounds(t);
        const WorkflowTrace back = trace_from_json(json::parse(trace_to_json(t).dump()));
        CHECK(back == t);
    }
}

TEST_CASE("tasks outside the workflow bounds are flagged, not dropped") {
    const json doc = {{"workflow_id", "wf"},
                      {"submitted_wall_ns", 100},
                      {"finished_wall_ns", 200},
                      {"tasks",
                       {{{"task_id", "in"}, {"name", "x"}, {"node_id", "n"}, {"start_wall_ns", 120},
                         {"end_wall_ns", 180}, {"cpu_time_s", 0.0}, {"status", "completed"}},
                        {{"task_id", "late"}, {"name", "x"}, {"node_id", "n"}, {"start_wall_ns", 150},
                         {"end_wall_ns", 250}, {"cpu_time_s", 0.0}, {"status", "completed"}}}}};
    const WorkflowTrace t = trace_from_json(doc);
    CHECK(t.tasks.size() == 2);
    CHECK(t.out_of_bounds_tasks == std::vector<std::string>{"late"});
}

TEST_CASE("generic trace from file") {
    TempDir dir("trace");
    const fs::path p = dir.path / "wf.json";
    const WorkflowTrace src = parse_nextflow_trace(kFixture);
    std::ofstream(p) << trace_to_json(src).dump(2);
    CHECK(parse_generic_trace(p) == src);
    std::ofstream(dir.path / "broken.json") << "{ not json";
    CHECK(code_of([&] { parse_generic_trace(dir.path / "broken.json"); }) == Errc::SchemaViolation);
}
