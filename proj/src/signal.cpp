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

#include "wattflow/signal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "wattflow/error.hpp"

namespace wattflow {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kPrefix = "start_";
constexpr std::string_view kSuffix = ".txt";

std::optional<std::string> session_from_filename(const std::string& name) {
    if (name.size() <= kPrefix.size() + kSuffix.size()) return std::nullopt;
    if (name.compare(0, kPrefix.size(), kPrefix) != 0) return std::nullopt;
    if (name.compare(name.size() - kSuffix.size(), kSuffix.size(), kSuffix) != 0) return std::nullopt;
    std::string id = name.substr(kPrefix.size(), name.size() - kPrefix.size() - kSuffix.size());
    if (!is_filesystem_safe(id)) return std::nullopt;
    return id;
}

}  // namespace

std::int64_t wall_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

bool is_filesystem_safe(std::string_view id) noexcept {
    if (id.empty() || id.size() > 200 || id.front() == '.') return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_' || c == '.';
        if (!ok) return false;
    }
    return true;
}

void SessionMarker::validate() const {
    if (!is_filesystem_safe(session_id)) {
        throw Error(Errc::InvalidArgument, "session id '" + session_id + "' is not filesystem-safe");
    }
    if (scope == SessionScope::Task && (!task_id || task_id->empty())) {
        throw Error(Errc::InvalidArgument, "task-scoped session requires a task id");
    }
    if (scope == SessionScope::Workflow && task_id) {
        throw Error(Errc::InvalidArgument, "workflow-scoped session must not carry a task id");
    }
    if (task_id && task_id->find('\n') != std::string::npos) {
        throw Error(Errc::InvalidArgument, "task id must be a single line");
    }
    if (max_runtime_s && !(*max_runtime_s > 0.0)) {
        throw Error(Errc::InvalidArgument, "max runtime must be positive");
    }
}

std::string SessionMarker::serialize() const {
    std::string out = "session=" + session_id + "\n";
    out += std::string("scope=") + (scope == SessionScope::Workflow ? "workflow" : "task") + "\n";
    if (task_id) out += "task=" + *task_id + "\n";
    out += "created_wall_ns=" + std::to_string(created_wall_ns) + "\n";
    if (max_runtime_s) {
        std::ostringstream os;
        os.precision(17);
        os << *max_runtime_s;
        out += "max_runtime_s=" + os.str() + "\n";
    }
    return out;
}

SessionMarker SessionMarker::parse(const std::string& text, const std::string& source_name) {
    SessionMarker m;
    bool have_session = false;
    bool have_created = false;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source_name + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw Error(Errc::ParseError, where + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "session") {
                m.session_id = value;
                have_session = true;
            } else if (key == "scope") {
                if (value == "workflow") m.scope = SessionScope::Workflow;
                else if (value == "task") m.scope = SessionScope::Task;
                else throw Error(Errc::ParseError, where + ": unknown scope '" + value + "'");
            } else if (key == "task") {
                m.task_id = value;
            } else if (key == "created_wall_ns") {
                std::size_t pos = 0;
                m.created_wall_ns = std::stoll(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                have_created = true;
            } else if (key == "max_runtime_s") {
                std::size_t pos = 0;
                m.max_runtime_s = std::stod(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
            }
            // Unknown keys are ignored for forward compatibility.
        } catch (const std::logic_error&) {
            throw Error(Errc::ParseError, where + ": bad value for " + key);
        }
    }
    if (!have_session) throw Error(Errc::ParseError, source_name + ": missing session=");
    if (!have_created) throw Error(Errc::ParseError, source_name + ": missing created_wall_ns=");
    try {
        m.validate();
    } catch (const Error& e) {
        throw Error(Errc::ParseError, source_name + ": " + e.what());
    }
    return m;
}

fs::path marker_path(const fs::path& signal_dir, const std::string& session_id) {
    return signal_dir / (std::string(kPrefix) + session_id + std::string(kSuffix));
}

void signal_start(const fs::path& signal_dir, const SessionMarker& marker) {
    marker.validate();
    std::error_code ec;
    if (!fs::is_directory(signal_dir, ec)) {
        throw Error(Errc::Io, "signal directory " + signal_dir.string() + " does not exist");
    }
    const fs::path target = marker_path(signal_dir, marker.session_id);
    const fs::path tmp = signal_dir / ("." + marker.session_id + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << marker.serialize();
        out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw Error(Errc::Io, "cannot write " + tmp.string());
        }
    }
    // link() fails if the target exists, unlike rename(); it gives an atomic
    // create-if-absent while still never exposing a half-written file.
    if (::link(tmp.c_str(), target.c_str()) != 0) {
        const int err = errno;
        fs::remove(tmp, ec);
        if (err == EEXIST) {
            throw Error(Errc::AlreadyActive, "session '" + marker.session_id + "' already active");
        }
        throw Error(Errc::Io, "cannot create " + target.string() + ": " + std::strerror(err));
    }
    fs::remove(tmp, ec);
}

StopResult signal_stop(const fs::path& signal_dir, const std::string& session_id) {
    if (!is_filesystem_safe(session_id)) {
        throw Error(Errc::InvalidArgument, "session id '" + session_id + "' is not filesystem-safe");
    }
    const fs::path target = marker_path(signal_dir, session_id);
    if (::unlink(target.c_str()) != 0) {
        if (errno == ENOENT) return StopResult{true};
        throw Error(Errc::Io, "cannot remove " + target.string() + ": " + std::strerror(errno));
    }
    return StopResult{false};
}

std::vector<SessionMarker> list_markers(const fs::path& signal_dir) {
    std::vector<SessionMarker> out;
    std::error_code ec;
    fs::directory_iterator it(signal_dir, ec);
    if (ec) throw Error(Errc::DirectoryVanished, signal_dir.string() + ": " + ec.message());
    for (const auto& entry : it) {
        const auto id = session_from_filename(entry.path().filename().string());
        if (!id) continue;
        std::ifstream in(entry.path());
        if (!in) continue;  // removed between listing and opening
        std::ostringstream buf;
        buf << in.rdbuf();
        try {
            SessionMarker m = SessionMarker::parse(buf.str(), entry.path().string());
            if (m.session_id != *id) continue;
            out.push_back(std::move(m));
        } catch (const Error&) {
            continue;
        }
    }
    return out;
}

std::string_view to_string(SessionEventKind k) noexcept {
    switch (k) {
        case SessionEventKind::Started: return "started";
        case SessionEventKind::Stopped: return "stopped";
        case SessionEventKind::Reaped: return "reaped";
        case SessionEventKind::Fatal: return "fatal";
    }
    return "unknown";
}

SignalWatcher::SignalWatcher(fs::path signal_dir, std::chrono::nanoseconds default_stale_timeout)
    : dir_(std::move(signal_dir)), default_stale_(default_stale_timeout) {}

std::chrono::nanoseconds SignalWatcher::stale_timeout_for(const SessionMarker& m) const {
    if (m.max_runtime_s) {
        return std::chrono::nanoseconds(static_cast<std::int64_t>(2.0 * *m.max_runtime_s * 1e9));
    }
    return default_stale_;
}

std::vector<SessionEvent> SignalWatcher::poll(std::int64_t now_wall_ns) {
    std::vector<SessionEvent> events;
    if (failed_) return events;
    std::error_code ec;
    if (!fs::is_directory(dir_, ec)) {
        failed_ = true;
        for (const auto& id : active_) {
            events.push_back({SessionEventKind::Reaped, id, markers_[id], "signal directory vanished"});
        }
        active_.clear();
        events.push_back({SessionEventKind::Fatal, "", std::nullopt,
                          "signal directory " + dir_.string() + " vanished"});
        return events;
    }
    std::vector<SessionMarker> present;
    try {
        present = list_markers(dir_);
    } catch (const Error& e) {
        failed_ = true;
        events.push_back({SessionEventKind::Fatal, "", std::nullopt, e.what()});
        return events;
    }
    std::set<std::string> seen;
    for (auto& m : present) {
        seen.insert(m.session_id);
        if (active_.count(m.session_id) || reaped_.count(m.session_id)) continue;
        active_.insert(m.session_id);
        markers_[m.session_id] = m;
        events.push_back({SessionEventKind::Started, m.session_id, m, ""});
    }
    for (auto it = active_.begin(); it != active_.end();) {
        const std::string id = *it;
        if (!seen.count(id)) {
            events.push_back({SessionEventKind::Stopped, id, markers_[id], ""});
            markers_.erase(id);
            it = active_.erase(it);
            continue;
        }
        const SessionMarker& m = markers_[id];
        if (now_wall_ns - m.created_wall_ns > stale_timeout_for(m).count()) {
            events.push_back({SessionEventKind::Reaped, id, m, "stale timeout exceeded"});
            reaped_.insert(id);
            markers_.erase(id);
            it = active_.erase(it);
            continue;
        }
        ++it;
    }
    for (auto it = reaped_.begin(); it != reaped_.end();) {
        it = seen.count(*it) ? std::next(it) : reaped_.erase(it);
    }
    return events;
}

void SignalWatcher::run(std::chrono::milliseconds tick,
                        const std::function<void(const SessionEvent&)>& on_event,
                        std::stop_token stop) {
    auto next = std::chrono::steady_clock::now();
    while (!stop.stop_requested()) {
        for (const auto& e : poll(wall_now_ns())) on_event(e);
        if (failed_) return;
        next += tick;
        std::this_thread::sleep_until(next);
    }
}

}  // namespace wattflow
