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

#include "wattflow/error.hpp"

namespace wattflow {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::InvalidArgument: return "invalid-argument";
        case Errc::Overflow: return "overflow";
        case Errc::WindowBeforeSeries: return "window-out-of-range(head)";
        case Errc::WindowAfterSeries: return "window-out-of-range(tail)";
        case Errc::DegenerateSeries: return "degenerate-series";
        case Errc::PermissionDenied: return "permission-denied";
        case Errc::DeviceAbsent: return "device-absent";
        case Errc::ParseError: return "parse-error";
        case Errc::HeaderMismatch: return "header-mismatch";
        case Errc::SinkWrite: return "sink-write";
        case Errc::AlreadyActive: return "already-active";
        case Errc::NotFound: return "not-found";
        case Errc::Io: return "io-error";
        case Errc::DirectoryVanished: return "directory-vanished";
        case Errc::MissingColumn: return "missing-column";
        case Errc::RowParse: return "row-parse-error";
        case Errc::EmptyTrace: return "empty-trace";
        case Errc::SchemaViolation: return "schema-violation";
        case Errc::OverlapDetected: return "overlap-detected";
        case Errc::MissingNodeLog: return "missing-node-log";
        case Errc::NoPointsInWindow: return "no-points-in-window";
        case Errc::DivisionByZeroEnergy: return "division-by-zero-energy";
        case Errc::WorkflowMismatch: return "workflow-mismatch";
        case Errc::AgentStart: return "agent-start";
    }
    return "unknown";
}

}  // namespace wattflow
