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

#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fieldbench/metrics.hpp"
#include "fieldbench/telemetry.hpp"
#include "support/log_gen.hpp"
#include "support/oracle_metrics.hpp"

using namespace fieldbench;
using fieldbench::testing::LogGenOptions;
using Catch::Matchers::WithinRel;

namespace {

constexpr std::int64_t kSecond = 1'000'000'000;
constexpr std::uint64_t kMiB = 1 << 20;

struct FixtureIo {
    Phase phase;
    std::uint32_t node;
    std::uint32_t proc;
    std::uint32_t iteration;
    std::int64_t t0;
    std::int64_t tf;
    std::uint64_t bytes;
};

// Builds a merged log from explicit I/O spans, one buffer per
// (phase, node, proc) with the mandatory ExecStart/ExecEnd wrapping.
EventLog make_log(const std::vector<FixtureIo>& ios,
                  std::map<std::string, std::string> echo) {
    struct Key {
        Phase phase;
        std::uint32_t node, proc;
        auto operator<=>(const Key&) const = default;
    };
    std::map<Key, std::vector<const FixtureIo*>> groups;
    for (const auto& io : ios) groups[{io.phase, io.node, io.proc}].push_back(&io);

    std::int64_t clock = 0;
    std::vector<EventBuffer> buffers;
    for (const auto& [key, group] : groups) {
        EventBuffer buf([&clock] { return clock; }, group.size() * kEventsPerIo + 2);
        clock = group.front()->t0 - 2;
        buf.record(key.phase, WorkerIdentity{key.node, key.proc, 0}, EventType::ExecStart);
        for (const auto* io : group)
            fieldbench::testing::gen_detail::emit_io(
                buf, clock, io->phase, WorkerIdentity{io->node, io->proc, io->iteration},
                io->t0, io->tf, io->bytes);
        clock = group.back()->tf + 2;
        buf.record(key.phase, WorkerIdentity{key.node, key.proc, 0}, EventType::ExecEnd);
        buffers.push_back(std::move(buf));
    }
    return merge_logs(std::move(buffers), std::move(echo));
}

std::map<std::string, std::string> ior_echo() { return {{"driver", "ior"}, {"pattern", "a"}}; }
std::map<std::string, std::string> fieldio_echo(const char* pattern) {
    return {{"driver", "fieldio"}, {"pattern", pattern}};
}

EventLog shifted(EventLog log, std::int64_t delta) {
    for (auto& r : log.records) r.timestamp_ns += delta;
    return log;
}

EventLog scaled(EventLog log, std::int64_t factor) {
    for (auto& r : log.records) r.timestamp_ns *= factor;
    return log;
}

}  // namespace

TEST_CASE("synchronous bandwidth: two processes, one megabyte each over half a second") {
    auto log = make_log(
        {
            {Phase::Write, 0, 0, 0, 0, 450'000'000, kMiB},
            {Phase::Write, 0, 1, 0, 50'000'000, 500'000'000, kMiB},
        },
        ior_echo());
    // 2 MiB over exactly 0.5 s.
    CHECK(synchronous_bandwidth(log, Phase::Write) == 4.0 * kMiB);
    CHECK(global_timing_bandwidth(log, Phase::Write) == 4.0 * kMiB);
    CHECK(total_parallel_wallclock(log, Phase::Write) == 500'000'000);
}

TEST_CASE("synchronous bandwidth averages per-iteration rates, not sizes over total time") {
    auto log = make_log(
        {
            {Phase::Write, 0, 0, 0, 0, 450'000'000, kMiB},
            {Phase::Write, 0, 1, 0, 50'000'000, 500'000'000, kMiB},
            {Phase::Write, 0, 0, 1, 600'000'000, 1'550'000'000, kMiB},
            {Phase::Write, 0, 1, 1, 650'000'000, 1'600'000'000, kMiB},
        },
        ior_echo());
    // Iteration rates are 4 MiB/s and 2 MiB/s; their mean is 3 MiB/s.
    CHECK(synchronous_bandwidth(log, Phase::Write) == 3.0 * kMiB);
    // The phase-level number differs: 4 MiB over 1.6 s.
    CHECK_THAT(global_timing_bandwidth(log, Phase::Write),
               WithinRel(4.0 * kMiB / 1.6, 1e-12));
    CHECK(single_iteration_wallclock(log, Phase::Write, 0) == 500'000'000);
    CHECK(single_iteration_wallclock(log, Phase::Write, 1) == kSecond);

    auto offs = io_offsets(log, Phase::Write);
    CHECK(offs.off0_ns == 50'000'000);
    CHECK(offs.offf_ns == 50'000'000);
}

TEST_CASE("global timing bandwidth: four transfers inside a two second envelope") {
    auto log = make_log(
        {
            {Phase::Read, 0, 0, 0, 1'000'000'000, 2'000'000'000, kMiB},
            {Phase::Read, 0, 1, 0, 1'100'000'000, 2'400'000'000, kMiB},
            {Phase::Read, 1, 0, 0, 1'200'000'000, 2'800'000'000, kMiB},
            {Phase::Read, 1, 1, 0, 1'300'000'000, 3'000'000'000, kMiB},
        },
        ior_echo());
    CHECK(global_timing_bandwidth(log, Phase::Read) == 2.0 * kMiB);
    CHECK(total_parallel_wallclock(log, Phase::Read) == 2 * kSecond);
}

TEST_CASE("start offset: straggler begins 0.2 seconds after the first process") {
    auto log = make_log(
        {
            {Phase::Write, 0, 0, 0, 0, kSecond, kMiB},
            {Phase::Write, 0, 1, 0, 200'000'000, kSecond, kMiB},
        },
        fieldio_echo("a"));
    auto offs = io_offsets(log, Phase::Write);
    CHECK(offs.off0_ns == 200'000'000);
    CHECK(offs.offf_ns == 0);

    auto report = build_report(log);
    const auto& m = report.phases.at(Phase::Write);
    CHECK(m.off0_fraction == 0.2);
    CHECK(m.offf_fraction == 0.0);
    CHECK_FALSE(m.synchronous_bandwidth.has_value());  // unsynchronized driver
    CHECK(m.iteration_wallclock_ns.empty());
    CHECK_FALSE(report.po0_ns.has_value());  // pattern a: no phase offsets
    CHECK_FALSE(report.aggregated_bandwidth.has_value());
}

TEST_CASE("lockstep workers have zero offsets") {
    std::vector<FixtureIo> ios;
    for (std::uint32_t p = 0; p < 3; ++p)
        for (std::uint32_t i = 0; i < 2; ++i)
            ios.push_back({Phase::Write, 0, p, i,
                           kSecond * (1 + static_cast<std::int64_t>(i)),
                           kSecond * (2 + static_cast<std::int64_t>(i)) - 10, kMiB});
    auto log = make_log(ios, ior_echo());
    auto offs = io_offsets(log, Phase::Write);
    CHECK(offs.off0_ns == 0);
    CHECK(offs.offf_ns == 0);
}

TEST_CASE("phase offsets between simultaneous write and read halves") {
    std::vector<FixtureIo> ios{
        // Setup activity far earlier must not influence the phase offsets.
        {Phase::Setup, 0, 0, 0, 10, 500'000, 4 * kMiB},
        {Phase::Write, 0, 0, 0, 1'000'000'000, 3'000'000'000, kMiB},
        {Phase::Write, 0, 1, 0, 1'020'000'000, 5'000'000'000, kMiB},
        {Phase::Read, 1, 0, 0, 1'050'000'000, 4'000'000'000, kMiB},
        {Phase::Read, 1, 1, 0, 1'070'000'000, 5'000'000'000, kMiB},
    };
    auto log = make_log(ios, fieldio_echo("b"));
    auto po = phase_offsets(log);
    CHECK(po.po0_ns == 50'000'000);
    CHECK(po.pof_ns == 0);

    auto report = build_report(log);
    REQUIRE(report.po0_ns.has_value());
    CHECK(*report.po0_ns == 50'000'000);
    CHECK(*report.pof_ns == 0);
    // Fractions are over the union span of the two phases: 4 seconds.
    CHECK(*report.po0_fraction == 0.0125);
    CHECK(*report.pof_fraction == 0.0);
    REQUIRE(report.aggregated_bandwidth.has_value());
    CHECK_THAT(*report.aggregated_bandwidth,
               WithinRel(global_timing_bandwidth(log, Phase::Write) +
                             global_timing_bandwidth(log, Phase::Read),
                         1e-12));
    CHECK(report.phases.count(Phase::Setup) == 1);
}

TEST_CASE("per-iteration metrics reject unsynchronized logs") {
    auto log = make_log({{Phase::Write, 0, 0, 0, 0, kSecond, kMiB}}, fieldio_echo("a"));
    CHECK_THROWS_AS(synchronous_bandwidth(log, Phase::Write), InvalidArgumentError);
    CHECK_THROWS_AS(single_iteration_wallclock(log, Phase::Write, 0), InvalidArgumentError);
    // Phase-level metrics remain available.
    CHECK(global_timing_bandwidth(log, Phase::Write) == 1.0 * kMiB);
}

TEST_CASE("phases with no complete operations are rejected") {
    auto log = make_log({{Phase::Write, 0, 0, 0, 0, kSecond, kMiB}}, ior_echo());
    CHECK_THROWS_AS(total_parallel_wallclock(log, Phase::Read), InvalidArgumentError);
    CHECK_THROWS_AS(global_timing_bandwidth(log, Phase::Read), InvalidArgumentError);
    CHECK_THROWS_AS(io_offsets(log, Phase::Read), InvalidArgumentError);
    CHECK_THROWS_AS(phase_offsets(log), InvalidArgumentError);
    CHECK(build_report(log).phases.count(Phase::Read) == 0);
}

TEST_CASE("asking for an absent iteration reports not-found") {
    auto log = make_log({{Phase::Write, 0, 0, 0, 0, kSecond, kMiB},
                         {Phase::Write, 0, 0, 1, 2 * kSecond, 3 * kSecond, kMiB}},
                        ior_echo());
    CHECK_THROWS_AS(single_iteration_wallclock(log, Phase::Write, 7), NotFoundError);
}

TEST_CASE("zero-duration phases cannot produce a bandwidth") {
    std::int64_t clock = 0;
    EventBuffer buf([&clock] { return clock; }, 16);
    WorkerIdentity id{0, 0, 0};
    clock = 5;
    buf.record(Phase::Write, id, EventType::ExecStart);
    clock = 10;
    buf.record(Phase::Write, id, EventType::IoStart);
    buf.record(Phase::Write, id, EventType::TransferEnd, kMiB);
    buf.record(Phase::Write, id, EventType::IoEnd);
    clock = 11;
    buf.record(Phase::Write, id, EventType::ExecEnd);
    std::vector<EventBuffer> buffers;
    buffers.push_back(std::move(buf));
    auto log = merge_logs(std::move(buffers), ior_echo());
    CHECK_THROWS_AS(global_timing_bandwidth(log, Phase::Write), InvalidArgumentError);
    CHECK_THROWS_AS(synchronous_bandwidth(log, Phase::Write), InvalidArgumentError);
    CHECK(total_parallel_wallclock(log, Phase::Write) == 0);  // duration itself is fine
}

TEST_CASE("operations missing their end event are ignored") {
    std::int64_t clock = 0;
    EventBuffer buf([&clock] { return clock; }, 32);
    WorkerIdentity id{0, 0, 0};
    clock = 1;
    buf.record(Phase::Write, id, EventType::ExecStart);
    clock = 10;
    buf.record(Phase::Write, id, EventType::IoStart);
    clock = 20;
    buf.record(Phase::Write, id, EventType::TransferEnd, kMiB);
    clock = 30;
    buf.record(Phase::Write, id, EventType::IoEnd);
    // A second operation that never completed (no IoEnd).
    clock = 40;
    buf.record(Phase::Write, WorkerIdentity{0, 0, 1}, EventType::IoStart);
    clock = 50;
    buf.record(Phase::Write, id, EventType::ExecEnd);
    std::vector<EventBuffer> buffers;
    buffers.push_back(std::move(buf));
    auto log = merge_logs(std::move(buffers), ior_echo());
    auto report = build_report(log);
    CHECK(report.phases.at(Phase::Write).io_count == 1);
    CHECK(report.phases.at(Phase::Write).total_parallel_wallclock_ns == 20);
}

TEST_CASE("eight-operation single-worker phase spans first start to last end") {
    std::vector<FixtureIo> ios;
    std::int64_t t = kSecond;
    for (std::uint32_t i = 0; i < 8; ++i) {
        ios.push_back({Phase::Write, 0, 0, i, t, t + 100'000'000, 256 * 1024});
        t += 150'000'000;
    }
    auto log = make_log(ios, ior_echo());
    CHECK(log.records.size() == expected_phase_records(1, 8));
    CHECK(total_parallel_wallclock(log, Phase::Write) ==
          (t - 150'000'000 + 100'000'000) - kSecond);
    auto offs = io_offsets(log, Phase::Write);
    CHECK(offs.off0_ns == 0);  // a single worker can have no straggler
    CHECK(offs.offf_ns == 0);
}

TEST_CASE("metrics are invariant under a uniform time shift") {
    std::mt19937_64 rng(20260822);
    for (int round = 0; round < 10; ++round) {
        auto opt = fieldbench::testing::random_log_options(rng);
        auto log = fieldbench::testing::generate_log(rng, opt);
        auto moved = shifted(log, 123'456'789);
        for (Phase phase : {Phase::Setup, Phase::Write, Phase::Read}) {
            if (detail::PhaseIndex::build(log, phase).empty()) continue;
            CHECK(total_parallel_wallclock(moved, phase) ==
                  total_parallel_wallclock(log, phase));
            CHECK(global_timing_bandwidth(moved, phase) ==
                  global_timing_bandwidth(log, phase));
            auto a = io_offsets(log, phase);
            auto b = io_offsets(moved, phase);
            CHECK(a.off0_ns == b.off0_ns);
            CHECK(a.offf_ns == b.offf_ns);
        }
    }
}

TEST_CASE("durations scale and bandwidths divide under integer time scaling") {
    std::mt19937_64 rng(77);
    LogGenOptions opt;
    opt.nodes = 2;
    opt.procs_per_node = 3;
    opt.iterations = 5;
    auto log = fieldbench::testing::generate_log(rng, opt);
    auto wide = scaled(log, 3);
    CHECK(total_parallel_wallclock(wide, Phase::Write) ==
          3 * total_parallel_wallclock(log, Phase::Write));
    CHECK_THAT(global_timing_bandwidth(wide, Phase::Write),
               WithinRel(global_timing_bandwidth(log, Phase::Write) / 3.0, 1e-12));
    CHECK_THAT(synchronous_bandwidth(wide, Phase::Write),
               WithinRel(synchronous_bandwidth(log, Phase::Write) / 3.0, 1e-12));
    auto a = io_offsets(log, Phase::Write);
    auto b = io_offsets(wide, Phase::Write);
    CHECK(b.off0_ns == 3 * a.off0_ns);
    CHECK(b.offf_ns == 3 * a.offf_ns);
}

TEST_CASE("randomized logs agree with the reference computations") {
    std::mt19937_64 rng(424242);
    for (int round = 0; round < 120; ++round) {
        auto opt = fieldbench::testing::random_log_options(rng);
        auto log = fieldbench::testing::generate_log(rng, opt);
        CAPTURE(round, opt.nodes, opt.procs_per_node, opt.iterations, opt.synchronized,
                opt.pattern_b, opt.include_setup);

        auto report = build_report(log);
        for (Phase phase : {Phase::Setup, Phase::Write, Phase::Read}) {
            if (!report.phases.count(phase)) continue;
            const auto& m = report.phases.at(phase);

            auto span = fieldbench::testing::oracle_total_parallel_wallclock(log, phase);
            CHECK(total_parallel_wallclock(log, phase) == span);
            CHECK(m.total_parallel_wallclock_ns == span);

            auto gtb = fieldbench::testing::oracle_global_timing_bandwidth(log, phase);
            CHECK_THAT(global_timing_bandwidth(log, phase), WithinRel(gtb, 1e-9));
            CHECK_THAT(m.global_timing_bandwidth, WithinRel(gtb, 1e-9));

            auto offs = fieldbench::testing::oracle_io_offsets(log, phase);
            CHECK(m.off0_ns == offs.off0_ns);
            CHECK(m.offf_ns == offs.offf_ns);

            if (opt.synchronized && phase != Phase::Setup) {
                auto sync = fieldbench::testing::oracle_synchronous_bandwidth(
                    log, phase, opt.iterations);
                REQUIRE(m.synchronous_bandwidth.has_value());
                CHECK_THAT(*m.synchronous_bandwidth, WithinRel(sync, 1e-9));
                REQUIRE(m.iteration_wallclock_ns.size() == opt.iterations);
                for (std::uint32_t i = 0; i < opt.iterations; ++i)
                    CHECK(m.iteration_wallclock_ns[i] ==
                          fieldbench::testing::oracle_single_iteration_wallclock(log, phase,
                                                                                 i));
            }
        }
        if (opt.pattern_b) {
            auto po = fieldbench::testing::oracle_phase_offsets(log);
            REQUIRE(report.po0_ns.has_value());
            CHECK(*report.po0_ns == po.po0_ns);
            CHECK(*report.pof_ns == po.pof_ns);
        }
    }
}

TEST_CASE("flat rows expose every applicable metric") {
    std::mt19937_64 rng(9);
    LogGenOptions opt;
    opt.pattern_b = true;
    opt.synchronized = false;
    opt.include_setup = true;
    auto log = fieldbench::testing::generate_log(rng, opt);
    auto rows = report_rows(build_report(log));
    auto has = [&](const std::string& name, const std::string& phase) {
        for (const auto& row : rows)
            if (row.name == name && row.phase == phase) return true;
        return false;
    };
    CHECK(has("global_timing_bandwidth", "write"));
    CHECK(has("global_timing_bandwidth", "read"));
    CHECK(has("global_timing_bandwidth", "setup"));
    CHECK(has("off0", "write"));
    CHECK(has("po0", ""));
    CHECK(has("aggregated_bandwidth", ""));
    CHECK_FALSE(has("synchronous_bandwidth", "write"));  // unsynchronized driver
}
