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

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <memory>
#include <thread>
#include <vector>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "wattflow/accounting.hpp"
#include "wattflow/counter.hpp"
#include "wattflow/error.hpp"
#include "wattflow/sampler.hpp"

extern "C" char** environ;

namespace wftest {

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag = "wf") {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

/// Series of a counter under constant power, read every `step_ns`,
/// reduced modulo the spec's modulus from an unbounded counter.
inline wattflow::SampleSeries constant_series(double watts, std::int64_t step_ns, int n,
                                              wattflow::CounterSpec spec = {},
                                              unsigned __int128 start = 0) {
    wattflow::SampleSeries s;
    s.node_id = "n";
    s.spec = spec;
    const auto mod = static_cast<unsigned __int128>(spec.modulus());
    for (int i = 0; i < n; ++i) {
        const long double joules = static_cast<long double>(watts) * i * step_ns * 1e-9L;
        const auto counts = static_cast<unsigned __int128>(joules / spec.energy_unit_joules + 1e-6L);
        s.samples.push_back({static_cast<std::int64_t>(i) * step_ns,
                             static_cast<std::uint64_t>((start + counts) % mod)});
    }
    return s;
}

/// Log an agent would write for mock profiles sampled every `interval_ns`
/// over [0, span_ns], anchored at `epoch_wall_ns`.
inline wattflow::NodeEnergyLog mock_log(const std::string& node,
                                        const std::vector<wattflow::MockProfile>& profiles,
                                        std::int64_t interval_ns, std::int64_t span_ns,
                                        std::int64_t epoch_wall_ns = 0) {
    wattflow::NodeEnergyLog log;
    log.node_id = node;
    for (const auto& p : profiles) {
        wattflow::SampleSeries s;
        s.node_id = node;
        s.spec = p.spec;
        s.epoch_wall_ns = epoch_wall_ns;
        for (std::int64_t t = 0;; t += interval_ns) {
            const std::int64_t tt = std::min(t, span_ns);
            s.samples.push_back({tt, p.raw_at(static_cast<double>(tt) * 1e-9)});
            if (tt == span_ns) break;
        }
        log.series_by_domain.emplace(p.spec.domain, std::move(s));
    }
    log.validate();
    return log;
}

inline wattflow::MockProfile flat(double watts, double seconds,
                                  wattflow::RaplDomain d = wattflow::RaplDomain::Package,
                                  std::uint64_t seed = 0) {
    wattflow::MockProfile p;
    p.spec.domain = d;
    p.segments = {{seconds, watts}};
    p.seed = seed;
    return p;
}

/// Agent config for a mock node drawing `watts` on the package domain.
inline nlohmann::json mock_agent_config(const std::string& node, const std::filesystem::path& log_dir,
                                        const std::filesystem::path& signal_dir, double watts,
                                        int interval_ms = 100) {
    return {{"node_id", node},
            {"interval_ms", interval_ms},
            {"log_dir", log_dir.string()},
            {"signal_dir", signal_dir.string()},
            {"max_power_watts", 1000.0},
            {"domains", {{{"domain", "package"}, {"bit_width", 32}, {"unit_j", 1e-6}}}},
            {"backend", {{"kind", "mock"}, {"profiles", {{"package", {{"seed", 3}, {"segments", {{36000.0, watts}}}}}}}}}};
}

/// Child process killed with SIGTERM and reaped on destruction.
class Process {
public:
    explicit Process(std::vector<std::string> argv) {
        std::vector<char*> args;
        for (auto& a : argv) args.push_back(a.data());
        args.push_back(nullptr);
        if (::posix_spawn(&pid_, args[0], nullptr, nullptr, args.data(), environ) != 0) pid_ = -1;
    }
    ~Process() { stop(); }
    Process(const Process&) = delete;
    Process& operator=(const Process&) = delete;

    bool running() const { return pid_ > 0; }
    /// SIGTERM, then wait; returns the exit status or -1.
    int stop() {
        if (pid_ <= 0) return -1;
        ::kill(pid_, SIGTERM);
        int st = 0;
        ::waitpid(pid_, &st, 0);
        pid_ = -1;
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    }

private:
    pid_t pid_ = -1;
};

/// Writes `doc` to `path` and starts `wattflow agent` on it.
inline std::unique_ptr<Process> spawn_agent(const std::string& bin, const std::filesystem::path& config_path,
                                            const nlohmann::json& doc) {
    std::ofstream(config_path) << doc.dump(2);
    return std::make_unique<Process>(std::vector<std::string>{bin, "--config", config_path.string(), "agent",
                                                              "--max-runtime-s", "120"});
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

template <typename F>
wattflow::Errc code_of(F&& f) {
    try {
        f();
    } catch (const wattflow::Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected a wattflow::Error");
}

}  // namespace wftest
