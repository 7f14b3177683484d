/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fieldbench/telemetry.hpp"

namespace fieldbench {

/// Throughput and offset measurements for one phase of a run. I/O boundaries
/// are the IoStart/IoEnd events; open/transfer/close sub-events are kept for
/// diagnostics only and play no part in these numbers.
struct PhaseMetrics {
    std::uint64_t io_count = 0;
    std::uint64_t total_bytes = 0;

    /// Max IoEnd of the last iteration minus min IoStart of the first.
    std::int64_t total_parallel_wallclock_ns = 0;

    /// Total bytes / total parallel wall-clock time.
    double global_timing_bandwidth = 0.0;

    /// Mean over iterations of (iteration bytes / iteration span); only for
    /// drivers that synchronize every iteration across workers.
    std::optional<double> synchronous_bandwidth;
    std::vector<std::int64_t> iteration_wallclock_ns;

    /// Start/end straggler offsets and their fractions of the wall-clock.
    std::int64_t off0_ns = 0;
    std::int64_t offf_ns = 0;
    double off0_fraction = 0.0;
    double offf_fraction = 0.0;
};

/// Full report over a log: per-phase metrics plus, for workloads with
/// simultaneous write and read phases, the inter-phase offsets and the
/// aggregated bandwidth.
struct MetricsReport {
    std::map<Phase, PhaseMetrics> phases;
    std::optional<std::int64_t> po0_ns;
    std::optional<std::int64_t> pof_ns;
    std::optional<double> po0_fraction;
    std::optional<double> pof_fraction;
    std::optional<double> aggregated_bandwidth;
};

struct IoOffsets {
    std::int64_t off0_ns = 0;
    std::int64_t offf_ns = 0;
};

struct PhaseOffsets {
    std::int64_t po0_ns = 0;
    std::int64_t pof_ns = 0;
};

/// True when the log came from a driver that barriers every iteration, the
/// precondition for per-iteration metrics.
inline bool is_synchronized_log(const EventLog& log) {
    auto it = log.echo.find("driver");
    return it != log.echo.end() && it->second == "ior";
}

namespace detail {

/// Per-I/O spans and sizes of one phase, keyed by (node, process, iteration).
struct PhaseIndex {
    struct Io {
        std::int64_t start = -1;
        std::int64_t end = -1;
        std::uint64_t bytes = 0;
    };
    std::map<WorkerIdentity, Io> ios;

    static PhaseIndex build(const EventLog& log, Phase phase) {
        PhaseIndex idx;
        for (const auto& r : log.records) {
            if (r.phase != phase) continue;
            if (r.event == EventType::IoStart) {
                auto& io = idx.ios[r.identity];
                if (io.start < 0) io.start = r.timestamp_ns;
            } else if (r.event == EventType::IoEnd) {
                idx.ios[r.identity].end = r.timestamp_ns;
            } else if (r.event == EventType::TransferEnd) {
                idx.ios[r.identity].bytes += r.size_bytes;
            }
        }
        for (auto it = idx.ios.begin(); it != idx.ios.end();) {
            if (it->second.start < 0 || it->second.end < 0)
                it = idx.ios.erase(it);  // incomplete I/O (no start or no end)
            else
                ++it;
        }
        return idx;
    }

    bool empty() const { return ios.empty(); }

    std::int64_t min_start() const {
        std::int64_t v = std::numeric_limits<std::int64_t>::max();
        for (const auto& [id, io] : ios) v = std::min(v, io.start);
        return v;
    }

    std::int64_t max_end() const {
        std::int64_t v = std::numeric_limits<std::int64_t>::min();
        for (const auto& [id, io] : ios) v = std::max(v, io.end);
        return v;
    }

    std::uint64_t total_bytes() const {
        std::uint64_t v = 0;
        for (const auto& [id, io] : ios) v += io.bytes;
        return v;
    }
};

inline PhaseIndex require_phase(const EventLog& log, Phase phase) {
    auto idx = PhaseIndex::build(log, phase);
    if (idx.empty())
        throw InvalidArgumentError(std::string("phase '") + to_string(phase) +
                                   "' has no complete I/O operations");
    return idx;
}

inline void require_synchronized(const EventLog& log, const char* what) {
    if (!is_synchronized_log(log))
        throw InvalidArgumentError(std::string(what) +
                                   " is only valid for synchronized (ior) driver logs");
}

}  // namespace detail

/// Max I/O end minus min I/O start across workers, for one iteration of a
/// synchronized driver.
inline std::int64_t single_iteration_wallclock(const EventLog& log, Phase phase,
                                               std::uint32_t iteration) {
    detail::require_synchronized(log, "single_iteration_wallclock");
    auto idx = detail::require_phase(log, phase);
    std::int64_t start = std::numeric_limits<std::int64_t>::max();
    std::int64_t end = std::numeric_limits<std::int64_t>::min();
    for (const auto& [id, io] : idx.ios) {
        if (id.iteration != iteration) continue;
        start = std::min(start, io.start);
        end = std::max(end, io.end);
    }
    if (end < start)
        throw NotFoundError("iteration " + std::to_string(iteration) + " not present in phase");
    return end - start;
}

/// Max I/O end of the last iteration minus min I/O start of the first, per
/// phase.
inline std::int64_t total_parallel_wallclock(const EventLog& log, Phase phase) {
    auto idx = detail::require_phase(log, phase);
    return idx.max_end() - idx.min_start();
}

/// Mean across iterations of (aggregate iteration bytes / iteration span),
/// bytes/second. Synchronized drivers only.
inline double synchronous_bandwidth(const EventLog& log, Phase phase) {
    detail::require_synchronized(log, "synchronous_bandwidth");
    auto idx = detail::require_phase(log, phase);
    struct Agg {
        std::int64_t start = std::numeric_limits<std::int64_t>::max();
        std::int64_t end = std::numeric_limits<std::int64_t>::min();
        std::uint64_t bytes = 0;
    };
    std::map<std::uint32_t, Agg> by_iteration;
    for (const auto& [id, io] : idx.ios) {
        auto& a = by_iteration[id.iteration];
        a.start = std::min(a.start, io.start);
        a.end = std::max(a.end, io.end);
        a.bytes += io.bytes;
    }
    double sum = 0.0;
    for (const auto& [iter, a] : by_iteration) {
        if (a.end <= a.start)
            throw InvalidArgumentError("iteration " + std::to_string(iter) +
                                       " has zero duration");
        sum += static_cast<double>(a.bytes) * 1e9 / static_cast<double>(a.end - a.start);
    }
    return sum / static_cast<double>(by_iteration.size());
}

/// Sum of all I/O sizes in the phase divided by the total parallel I/O
/// wall-clock time, bytes/second.
inline double global_timing_bandwidth(const EventLog& log, Phase phase) {
    auto idx = detail::require_phase(log, phase);
    std::int64_t span = idx.max_end() - idx.min_start();
    if (span <= 0) throw InvalidArgumentError("phase has zero duration");
    return static_cast<double>(idx.total_bytes()) * 1e9 / static_cast<double>(span);
}

/// Straggler offsets of a phase:
///   off0 — last first-iteration I/O start minus the first I/O start;
///   offf — last I/O end minus the first last-iteration I/O end.
inline IoOffsets io_offsets(const EventLog& log, Phase phase) {
    auto idx = detail::require_phase(log, phase);
    struct Range {
        std::uint32_t first_iter = std::numeric_limits<std::uint32_t>::max();
        std::uint32_t last_iter = 0;
    };
    std::map<std::pair<std::uint32_t, std::uint32_t>, Range> workers;
    for (const auto& [id, io] : idx.ios) {
        auto& r = workers[{id.client_node, id.process}];
        r.first_iter = std::min(r.first_iter, id.iteration);
        r.last_iter = std::max(r.last_iter, id.iteration);
    }
    std::int64_t last_first_start = std::numeric_limits<std::int64_t>::min();
    std::int64_t first_last_end = std::numeric_limits<std::int64_t>::max();
    for (const auto& [key, range] : workers) {
        const auto& first_io =
            idx.ios.at(WorkerIdentity{key.first, key.second, range.first_iter});
        const auto& last_io = idx.ios.at(WorkerIdentity{key.first, key.second, range.last_iter});
        last_first_start = std::max(last_first_start, first_io.start);
        first_last_end = std::min(first_last_end, last_io.end);
    }
    return IoOffsets{last_first_start - idx.min_start(), idx.max_end() - first_last_end};
}

/// Start/end skew between the simultaneous write and read phases (setup
/// excluded): absolute differences of the phases' first I/O starts and last
/// I/O ends.
inline PhaseOffsets phase_offsets(const EventLog& log) {
    auto w = detail::PhaseIndex::build(log, Phase::Write);
    auto r = detail::PhaseIndex::build(log, Phase::Read);
    if (w.empty() || r.empty())
        throw InvalidArgumentError(
            "phase offsets need simultaneous write and read phases (pattern b)");
    auto abs64 = [](std::int64_t v) { return v < 0 ? -v : v; };
    return PhaseOffsets{abs64(w.min_start() - r.min_start()), abs64(w.max_end() - r.max_end())};
}

/// Assemble every metric applicable to the log: per-iteration metrics only
/// for synchronized drivers, inter-phase offsets and aggregated bandwidth
/// only for pattern-b logs.
inline MetricsReport build_report(const EventLog& log) {
    MetricsReport report;
    const bool synchronized = is_synchronized_log(log);
    auto pattern = log.echo.find("pattern");
    const bool pattern_b = pattern != log.echo.end() && pattern->second == "b";

    for (Phase phase : {Phase::Setup, Phase::Write, Phase::Read}) {
        auto idx = detail::PhaseIndex::build(log, phase);
        if (idx.empty()) continue;
        PhaseMetrics m;
        m.io_count = idx.ios.size();
        m.total_bytes = idx.total_bytes();
        m.total_parallel_wallclock_ns = idx.max_end() - idx.min_start();
        m.global_timing_bandwidth = global_timing_bandwidth(log, phase);
        auto offs = io_offsets(log, phase);
        m.off0_ns = offs.off0_ns;
        m.offf_ns = offs.offf_ns;
        m.off0_fraction = static_cast<double>(offs.off0_ns) /
                          static_cast<double>(m.total_parallel_wallclock_ns);
        m.offf_fraction = static_cast<double>(offs.offf_ns) /
                          static_cast<double>(m.total_parallel_wallclock_ns);
        if (synchronized) {
            m.synchronous_bandwidth = synchronous_bandwidth(log, phase);
            std::uint32_t max_iter = 0;
            for (const auto& [id, io] : idx.ios) max_iter = std::max(max_iter, id.iteration);
            for (std::uint32_t i = 0; i <= max_iter; ++i)
                m.iteration_wallclock_ns.push_back(single_iteration_wallclock(log, phase, i));
        }
        report.phases.emplace(phase, std::move(m));
    }

    if (pattern_b && report.phases.count(Phase::Write) && report.phases.count(Phase::Read)) {
        auto po = phase_offsets(log);
        report.po0_ns = po.po0_ns;
        report.pof_ns = po.pof_ns;
        // Fractions are of the union span of the two simultaneous phases.
        auto w = detail::PhaseIndex::build(log, Phase::Write);
        auto r = detail::PhaseIndex::build(log, Phase::Read);
        std::int64_t span = std::max(w.max_end(), r.max_end()) -
                            std::min(w.min_start(), r.min_start());
        if (span > 0) {
            report.po0_fraction = static_cast<double>(po.po0_ns) / static_cast<double>(span);
            report.pof_fraction = static_cast<double>(po.pof_ns) / static_cast<double>(span);
        }
        report.aggregated_bandwidth = report.phases.at(Phase::Write).global_timing_bandwidth +
                                      report.phases.at(Phase::Read).global_timing_bandwidth;
    }
    return report;
}

/// Flat (name, phase, value, unit) rows for spreadsheets and plotting.
struct MetricRow {
    std::string name;
    std::string phase;
    double value = 0.0;
    std::string unit;
};

inline std::vector<MetricRow> report_rows(const MetricsReport& report) {
    std::vector<MetricRow> rows;
    for (const auto& [phase, m] : report.phases) {
        const std::string p = to_string(phase);
        rows.push_back({"io_count", p, static_cast<double>(m.io_count), "1"});
        rows.push_back({"total_bytes", p, static_cast<double>(m.total_bytes), "bytes"});
        rows.push_back({"total_parallel_wallclock", p,
                        static_cast<double>(m.total_parallel_wallclock_ns) / 1e9, "s"});
        rows.push_back({"global_timing_bandwidth", p, m.global_timing_bandwidth, "bytes/s"});
        if (m.synchronous_bandwidth)
            rows.push_back({"synchronous_bandwidth", p, *m.synchronous_bandwidth, "bytes/s"});
        rows.push_back({"off0", p, static_cast<double>(m.off0_ns) / 1e9, "s"});
        rows.push_back({"offf", p, static_cast<double>(m.offf_ns) / 1e9, "s"});
        rows.push_back({"off0_fraction", p, m.off0_fraction, "1"});
        rows.push_back({"offf_fraction", p, m.offf_fraction, "1"});
    }
    if (report.po0_ns)
        rows.push_back({"po0", "", static_cast<double>(*report.po0_ns) / 1e9, "s"});
    if (report.pof_ns)
        rows.push_back({"pof", "", static_cast<double>(*report.pof_ns) / 1e9, "s"});
    if (report.po0_fraction) rows.push_back({"po0_fraction", "", *report.po0_fraction, "1"});
    if (report.pof_fraction) rows.push_back({"pof_fraction", "", *report.pof_fraction, "1"});
    if (report.aggregated_bandwidth)
        rows.push_back({"aggregated_bandwidth", "", *report.aggregated_bandwidth, "bytes/s"});
    return rows;
}

}  // namespace fieldbench
