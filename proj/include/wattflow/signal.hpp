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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <vector>

namespace wattflow {

enum class SessionScope { Workflow, Task };

struct SessionMarker {
    std::string session_id;
    std::int64_t created_wall_ns = 0;
    SessionScope scope = SessionScope::Workflow;
    std::optional<std::string> task_id;
    /// Declared upper bound on the workflow runtime; the stale timeout is twice this.
    std::optional<double> max_runtime_s;

    void validate() const;
    std::string serialize() const;
    static SessionMarker parse(const std::string& text, const std::string& source_name);

    bool operator==(const SessionMarker&) const = default;
};

/// Letters, digits, '-', '_' and '.', not starting with '.'.
bool is_filesystem_safe(std::string_view id) noexcept;

std::filesystem::path marker_path(const std::filesystem::path& signal_dir,
                                  const std::string& session_id);

/// Creates `start_<id>.txt` atomically. Throws AlreadyActive if present.
void signal_start(const std::filesystem::path& signal_dir, const SessionMarker& marker);

struct StopResult {
    bool was_absent = false;
};

/// Removes the marker. Idempotent: a missing marker is reported, not an error.
StopResult signal_stop(const std::filesystem::path& signal_dir, const std::string& session_id);

std::vector<SessionMarker> list_markers(const std::filesystem::path& signal_dir);

enum class SessionEventKind { Started, Stopped, Reaped, Fatal };

struct SessionEvent {
    SessionEventKind kind;
    std::string session_id;
    std::optional<SessionMarker> marker;
    std::string detail;
};

std::string_view to_string(SessionEventKind k) noexcept;

/// Polls a signal directory and turns marker appearance and removal into
/// session events. One instance per node; instances never modify markers.
class SignalWatcher {
public:
    static constexpr std::chrono::hours kDefaultStaleTimeout{24};

    explicit SignalWatcher(std::filesystem::path signal_dir,
                           std::chrono::nanoseconds default_stale_timeout = kDefaultStaleTimeout);

    /// One scan. `now_wall_ns` drives stale-session reaping.
    std::vector<SessionEvent> poll(std::int64_t now_wall_ns);

    /// Loops `poll` every `tick` until the stop token fires or the directory
    /// vanishes.
    void run(std::chrono::milliseconds tick, const std::function<void(const SessionEvent&)>& on_event,
             std::stop_token stop);

    std::chrono::nanoseconds stale_timeout_for(const SessionMarker& m) const;
    const std::set<std::string>& active() const noexcept { return active_; }
    bool failed() const noexcept { return failed_; }

private:
    std::filesystem::path dir_;
    std::chrono::nanoseconds default_stale_;
    std::set<std::string> active_;
    std::map<std::string, SessionMarker> markers_;
    /// Reaped ids whose marker is still on disk; not restarted until it goes away.
    std::set<std::string> reaped_;
    bool failed_ = false;
};

std::int64_t wall_now_ns();

}  // namespace wattflow
