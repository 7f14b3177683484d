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
#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fieldbench/errors.hpp"

namespace fieldbench {

enum class Phase : std::uint8_t { Setup, Write, Read };

inline const char* to_string(Phase p) {
    switch (p) {
        case Phase::Setup: return "setup";
        case Phase::Write: return "write";
        case Phase::Read: return "read";
    }
    return "?";
}

inline Phase phase_from_string(std::string_view s) {
    if (s == "setup") return Phase::Setup;
    if (s == "write") return Phase::Write;
    if (s == "read") return Phase::Read;
    throw ParseError("unknown phase '" + std::string(s) + "'");
}

/// The ten per-worker timestamps of one benchmark execution: ExecStart and
/// ExecEnd once per worker, the remaining eight once per I/O iteration, in
/// this order.
enum class EventType : std::uint8_t {
    ExecStart,
    IoStart,
    OpenStart,
    OpenEnd,
    TransferStart,
    TransferEnd,
    CloseStart,
    CloseEnd,
    IoEnd,
    ExecEnd,
};

inline const char* to_string(EventType e) {
    switch (e) {
        case EventType::ExecStart: return "ExecStart";
        case EventType::IoStart: return "IoStart";
        case EventType::OpenStart: return "OpenStart";
        case EventType::OpenEnd: return "OpenEnd";
        case EventType::TransferStart: return "TransferStart";
        case EventType::TransferEnd: return "TransferEnd";
        case EventType::CloseStart: return "CloseStart";
        case EventType::CloseEnd: return "CloseEnd";
        case EventType::IoEnd: return "IoEnd";
        case EventType::ExecEnd: return "ExecEnd";
    }
    return "?";
}

inline EventType event_type_from_string(std::string_view s) {
    static const std::pair<std::string_view, EventType> kNames[] = {
        {"ExecStart", EventType::ExecStart},   {"IoStart", EventType::IoStart},
        {"OpenStart", EventType::OpenStart},   {"OpenEnd", EventType::OpenEnd},
        {"TransferStart", EventType::TransferStart},
        {"TransferEnd", EventType::TransferEnd},
        {"CloseStart", EventType::CloseStart}, {"CloseEnd", EventType::CloseEnd},
        {"IoEnd", EventType::IoEnd},           {"ExecEnd", EventType::ExecEnd},
    };
    for (const auto& [name, value] : kNames)
        if (name == s) return value;
    throw ParseError("unknown event '" + std::string(s) + "'");
}

/// Which worker, on which client node, during which of its I/O iterations.
struct WorkerIdentity {
    std::uint32_t client_node = 0;
    std::uint32_t process = 0;
    std::uint32_t iteration = 0;

    friend auto operator<=>(const WorkerIdentity&, const WorkerIdentity&) = default;
    friend bool operator==(const WorkerIdentity&, const WorkerIdentity&) = default;
};

struct EventRecord {
    Phase phase = Phase::Write;
    WorkerIdentity identity;
    EventType event = EventType::ExecStart;
    std::int64_t timestamp_ns = 0;
    std::uint64_t size_bytes = 0;  // nonzero only on TransferEnd

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Per-worker event capture: appended only by its owning worker, preallocated
/// so recording does not allocate per event.
class EventBuffer {
public:
    using Clock = std::function<std::int64_t()>;

    EventBuffer() = default;
    explicit EventBuffer(Clock clock, std::size_t expected_records = 0)
        : clock_(std::move(clock)) {
        records_.reserve(expected_records);
    }

    void record(Phase phase, const WorkerIdentity& identity, EventType event,
                std::uint64_t size_bytes = 0) {
        records_.push_back(EventRecord{phase, identity, event, clock_(), size_bytes});
    }

    /// Append a pre-timestamped record (tests and replay).
    void append(const EventRecord& r) { records_.push_back(r); }

    const std::vector<EventRecord>& records() const { return records_; }
    std::vector<EventRecord> take() { return std::move(records_); }
    std::size_t size() const { return records_.size(); }

private:
    Clock clock_;
    std::vector<EventRecord> records_;
};

/// Merged, immutable run trace: every worker's records, totally ordered by
/// (timestamp, node, process), plus an echo of the configuration that
/// produced it (including the clock source).
struct EventLog {
    std::map<std::string, std::string> echo;
    std::vector<EventRecord> records;

    friend bool operator==(const EventLog&, const EventLog&) = default;
};

/// Records each worker must emit exactly once per I/O iteration.
inline constexpr std::size_t kEventsPerIo = 8;

/// Total records a phase of `workers` workers running `iterations` I/Os each
/// contributes: eight per iteration plus ExecStart/ExecEnd per worker.
inline std::uint64_t expected_phase_records(std::uint64_t workers, std::uint64_t iterations) {
    return workers * (iterations * kEventsPerIo + 2);
}

/// Merge per-worker buffers into one log sorted by (timestamp, node,
/// process); ties keep each worker's own record order. Every buffer must end
/// a complete execution (contain an ExecEnd) — a missing one means a worker
/// died mid-run.
inline EventLog merge_logs(std::vector<EventBuffer> buffers,
                           std::map<std::string, std::string> echo = {}) {
    if (buffers.empty()) throw RunError("merge: no worker buffers");
    EventLog log;
    log.echo = std::move(echo);
    std::size_t total = 0;
    for (const auto& b : buffers) total += b.size();
    log.records.reserve(total);
    for (auto& b : buffers) {
        auto records = b.take();
        bool complete = false;
        for (const auto& r : records)
            if (r.event == EventType::ExecEnd) {
                complete = true;
                break;
            }
        if (!complete) {
            std::string who = records.empty()
                                  ? "unknown worker (empty buffer)"
                                  : "node " + std::to_string(records.front().identity.client_node) +
                                        " process " +
                                        std::to_string(records.front().identity.process);
            throw RunError("merge: missing ExecEnd from " + who);
        }
        log.records.insert(log.records.end(), records.begin(), records.end());
    }
    std::stable_sort(log.records.begin(), log.records.end(),
                     [](const EventRecord& a, const EventRecord& b) {
                         if (a.timestamp_ns != b.timestamp_ns)
                             return a.timestamp_ns < b.timestamp_ns;
                         if (a.identity.client_node != b.identity.client_node)
                             return a.identity.client_node < b.identity.client_node;
                         return a.identity.process < b.identity.process;
                     });
    return log;
}

inline constexpr std::string_view kLogHeader = "phase,node,process,iteration,event,timestamp_ns,size_bytes";

/// Line-oriented form: sorted `# key=value` echo lines, the header line, then
/// one comma-separated record per line. serialize → parse → serialize is
/// byte-identical.
inline std::string serialize_log(const EventLog& log) {
    std::string out;
    out.reserve(64 * (log.records.size() + log.echo.size() + 1));
    for (const auto& [k, v] : log.echo) {
        out += "# ";
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    out += kLogHeader;
    out += '\n';
    char buf[32];
    for (const auto& r : log.records) {
        out += to_string(r.phase);
        out += ',';
        auto num = [&](auto value) {
            auto res = std::to_chars(buf, buf + sizeof(buf), value);
            out.append(buf, res.ptr);
        };
        num(r.identity.client_node);
        out += ',';
        num(r.identity.process);
        out += ',';
        num(r.identity.iteration);
        out += ',';
        out += to_string(r.event);
        out += ',';
        num(r.timestamp_ns);
        out += ',';
        num(r.size_bytes);
        out += '\n';
    }
    return out;
}

inline EventLog parse_log(std::string_view text) {
    EventLog log;
    std::size_t line_no = 0;
    bool seen_header = false;
    std::size_t pos = 0;

    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError("line " + std::to_string(line_no) + ": " + why);
    };

    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;

        if (line.starts_with("# ")) {
            if (seen_header) throw fail("echo line after header");
            std::string_view kv = line.substr(2);
            std::size_t eq = kv.find('=');
            if (eq == std::string_view::npos) throw fail("echo line without '='");
            log.echo.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
            continue;
        }
        if (!seen_header) {
            if (line != kLogHeader) throw fail("expected header '" + std::string(kLogHeader) + "'");
            seen_header = true;
            continue;
        }

        std::string_view fields[7];
        std::size_t field_count = 0;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (field_count >= 7) throw fail("too many fields");
                fields[field_count++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (field_count != 7) throw fail("expected 7 fields, got " + std::to_string(field_count));

        auto parse_num = [&](std::string_view s, auto& out, const char* what) {
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc() || p != s.data() + s.size())
                throw fail(std::string("bad ") + what + " '" + std::string(s) + "'");
        };

        EventRecord r;
        try {
            r.phase = phase_from_string(fields[0]);
            r.event = event_type_from_string(fields[4]);
        } catch (const ParseError& e) {
            throw fail(e.what());
        }
        parse_num(fields[1], r.identity.client_node, "node");
        parse_num(fields[2], r.identity.process, "process");
        parse_num(fields[3], r.identity.iteration, "iteration");
        parse_num(fields[5], r.timestamp_ns, "timestamp");
        parse_num(fields[6], r.size_bytes, "size");
        log.records.push_back(r);
    }
    if (!seen_header) {
        ++line_no;
        throw fail("missing header line");
    }
    return log;
}

}  // namespace fieldbench
