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
#include <exception>
#include <memory>
#include <string>
#include <vector>

#include "fieldbench/census.hpp"
#include "fieldbench/memory_backend.hpp"
#include "fieldbench/metrics.hpp"
#include "fieldbench/sim_backend.hpp"
#include "fieldbench/workload.hpp"

using namespace fieldbench;
using Catch::Matchers::ContainsSubstring;

namespace {

constexpr std::uint64_t kKiB = 1ull << 10;

std::shared_ptr<Backend> memory_pool() {
    SimTopology topo;
    topo.server_node_count = 1;
    return std::make_shared<MemoryBackend>(topo);
}

/// Cheap simulated pool: one target, flat latency, fat interfaces.
SimTopology sim_topology() {
    SimTopology t;
    t.server_node_count = 1;
    t.engines_per_node = 1;
    t.targets_per_engine = 1;
    t.per_target_bandwidth = 100ull << 20;
    t.per_interface_bandwidth = 100ull << 30;
    t.per_op_latency_ns = 1'000'000;
    return t;
}

BenchmarkConfig base_config() {
    BenchmarkConfig cfg;
    cfg.pattern = Pattern::A;
    cfg.driver = Driver::FieldIo;
    cfg.mode = FieldStoreMode::Full;
    cfg.server_node_count = 1;
    cfg.client_node_count = 2;
    cfg.processes_per_client_node = 1;
    cfg.ios_per_process = 2;
    cfg.object_size = 4 * kKiB;
    cfg.contention = Contention::PerProcessForecastIndex;
    cfg.seed = 424242;
    return cfg;
}

/// Asserts one worker's records in one phase are exactly ExecStart, then the
/// eight-event bracket per iteration in order, then ExecEnd, and that the
/// worker's own timeline never goes backwards.
void check_worker_phase(const EventLog& log, Phase phase, unsigned node, unsigned proc,
                        unsigned ios) {
    std::vector<const EventRecord*> recs;
    for (const auto& r : log.records)
        if (r.phase == phase && r.identity.client_node == node && r.identity.process == proc)
            recs.push_back(&r);
    REQUIRE(recs.size() == 8u * ios + 2u);
    CHECK(recs.front()->event == EventType::ExecStart);
    CHECK(recs.back()->event == EventType::ExecEnd);
    const EventType bracket[8] = {EventType::IoStart,    EventType::OpenStart,
                                  EventType::OpenEnd,    EventType::TransferStart,
                                  EventType::TransferEnd, EventType::CloseStart,
                                  EventType::CloseEnd,   EventType::IoEnd};
    for (unsigned i = 0; i < ios; ++i)
        for (unsigned k = 0; k < 8; ++k) {
            const EventRecord& r = *recs[1 + 8 * i + k];
            CHECK(r.event == bracket[k]);
            CHECK(r.identity.iteration == i);
        }
    for (std::size_t j = 1; j < recs.size(); ++j)
        CHECK(recs[j - 1]->timestamp_ns <= recs[j]->timestamp_ns);
}

}  // namespace

TEST_CASE("field keys identify their writer and iteration") {
    const WorkerIdentity id{3, 7, 11};

    FieldKey per_proc = generate_field_key(id, Contention::PerProcessForecastIndex);
    CHECK(per_proc.most_significant.at("node") == "3");
    CHECK(per_proc.most_significant.at("proc") == "7");
    CHECK(per_proc.least_significant.at("src") == "3.7");
    CHECK(per_proc.least_significant.at("step") == "11");

    FieldKey shared = generate_field_key(id, Contention::SharedForecastIndex);
    CHECK(shared.most_significant.count("node") == 0);
    CHECK(shared.most_significant.at("stream") == "shared");
    CHECK(shared.least_significant == per_proc.least_significant);

    // Shared forecast: distinct workers/iterations still get distinct keys.
    FieldKey other = generate_field_key({3, 7, 12}, Contention::SharedForecastIndex);
    CHECK(shared.most_significant == other.most_significant);
    CHECK(canonical_full_serialization(shared) != canonical_full_serialization(other));
}

TEST_CASE("benchmark config validation names the offending field") {
    BenchmarkConfig cfg = base_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.server_node_count = 0;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("server_node_count"));
    cfg = base_config();
    cfg.client_node_count = 0;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("client_node_count"));
    cfg = base_config();
    cfg.processes_per_client_node = 0;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("processes_per_client_node"));
    cfg = base_config();
    cfg.ios_per_process = 0;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("ios_per_process"));
    cfg = base_config();
    cfg.repetitions = 0;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("repetitions"));
    cfg = base_config();
    cfg.object_size = payload::kHeaderBytes - 1;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("object_size"));
    cfg = base_config();
    cfg.start_skew_ns = -1;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("start_skew_ns"));

    cfg = base_config();
    cfg.pattern = Pattern::B;
    cfg.client_node_count = 3;
    cfg.processes_per_client_node = 1;
    CHECK_THROWS_WITH(cfg.validate(), ContainsSubstring("even"));
    cfg.driver = Driver::IorSegments;  // segment driver has no pairing rule
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("enum names round-trip through their parsers") {
    CHECK(pattern_from_string(to_string(Pattern::A)) == Pattern::A);
    CHECK(pattern_from_string(to_string(Pattern::B)) == Pattern::B);
    CHECK(driver_from_string(to_string(Driver::FieldIo)) == Driver::FieldIo);
    CHECK(driver_from_string(to_string(Driver::IorSegments)) == Driver::IorSegments);
    CHECK(contention_from_string(to_string(Contention::SharedForecastIndex)) ==
          Contention::SharedForecastIndex);
    CHECK(contention_from_string(to_string(Contention::PerProcessForecastIndex)) ==
          Contention::PerProcessForecastIndex);
    CHECK_THROWS_AS(pattern_from_string("c"), ConfigError);
    CHECK_THROWS_AS(driver_from_string("posix"), ConfigError);
    CHECK_THROWS_AS(contention_from_string("none"), ConfigError);
}

TEST_CASE("tagged payloads verify and reject tampering") {
    const payload::Tag tag{1, 2, 3, 4, 100};
    Bytes data = payload::make(7, tag);
    REQUIRE(data.size() == 100);
    CHECK(payload::verify(7, data) == tag);

    SECTION("truncation below the header is reported") {
        CHECK_THROWS_WITH(payload::verify(7, std::string_view(data.data(), 40)),
                          ContainsSubstring("shorter than its header"));
    }
    SECTION("magic damage is reported") {
        Bytes bad = data;
        bad[0] = static_cast<char>(bad[0] ^ 0x01);
        CHECK_THROWS_WITH(payload::verify(7, bad), ContainsSubstring("magic"));
    }
    SECTION("the wrong run seed is reported") {
        CHECK_THROWS_WITH(payload::verify(8, data), ContainsSubstring("seed"));
    }
    SECTION("body corruption is located") {
        Bytes bad = data;
        bad[60] = static_cast<char>(bad[60] ^ 0x10);
        CHECK_THROWS_WITH(payload::verify(7, bad), ContainsSubstring("corrupt"));
    }
    SECTION("payloads smaller than the header are rejected at creation") {
        CHECK_THROWS_AS(payload::make(7, payload::Tag{0, 0, 0, 0, 47}), InvalidArgumentError);
    }
}

TEST_CASE("write-then-read produces a complete, ordered event log") {
    auto backend = memory_pool();
    BenchmarkConfig cfg = base_config();  // 2 nodes x 1 proc, 2 I/Os each

    EventLog log = run_benchmark(backend, cfg);

    const unsigned W = cfg.total_workers();
    REQUIRE(log.records.size() == 2 * expected_phase_records(W, cfg.ios_per_process));
    for (unsigned node = 0; node < 2; ++node) {
        check_worker_phase(log, Phase::Write, node, 0, cfg.ios_per_process);
        check_worker_phase(log, Phase::Read, node, 0, cfg.ios_per_process);
    }

    CHECK(log.echo.at("driver") == "fieldio");
    CHECK(log.echo.at("pattern") == "a");
    CHECK(log.echo.at("mode") == "full");
    CHECK(log.echo.at("contention") == "perproc");
    CHECK(log.echo.at("nodes") == "2");
    CHECK(log.echo.at("procs_per_node") == "1");
    CHECK(log.echo.at("iterations") == "2");
    CHECK(log.echo.at("servers") == "1");
    CHECK(log.echo.at("object_size") == std::to_string(cfg.object_size));
    CHECK(log.echo.at("backend") == "memory");
    CHECK(log.echo.count("start_skew_ns") == 0);
    CHECK_FALSE(is_synchronized_log(log));

    // Every transfer carried the configured object size, in both directions.
    MetricsReport report = build_report(log);
    for (Phase phase : {Phase::Write, Phase::Read}) {
        REQUIRE(report.phases.count(phase) == 1);
        CHECK(report.phases.at(phase).io_count == W * cfg.ios_per_process);
        CHECK(report.phases.at(phase).total_bytes ==
              W * cfg.ios_per_process * cfg.object_size);
    }
}

TEST_CASE("write-then-read covers every field exactly once in all store modes") {
    const unsigned W = 4;
    BenchmarkConfig cfg = base_config();
    cfg.client_node_count = 2;
    cfg.processes_per_client_node = 2;
    cfg.ios_per_process = 3;

    SECTION("full layout, per-process forecasts") {
        cfg.mode = FieldStoreMode::Full;
        auto backend = memory_pool();
        run_benchmark(backend, cfg);
        CensusReport census = take_census(backend->snapshot());
        CHECK(census.containers == 1 + 2 * W);  // main + (index, store) per forecast
        CHECK(census.key_values == 1 + W);      // main index + one KV per forecast
        CHECK(census.arrays == W * cfg.ios_per_process);
        CHECK(census.unreferenced_arrays == 0);
    }
    SECTION("full layout, one shared forecast") {
        cfg.mode = FieldStoreMode::Full;
        cfg.contention = Contention::SharedForecastIndex;
        auto backend = memory_pool();
        run_benchmark(backend, cfg);
        CensusReport census = take_census(backend->snapshot());
        CHECK(census.containers == 3);  // main + the one forecast's index and store
        CHECK(census.key_values == 2);
        CHECK(census.arrays == W * cfg.ios_per_process);
        CHECK(census.unreferenced_arrays == 0);
    }
    SECTION("index without per-forecast containers") {
        cfg.mode = FieldStoreMode::NoContainers;
        auto backend = memory_pool();
        run_benchmark(backend, cfg);
        CensusReport census = take_census(backend->snapshot());
        CHECK(census.containers == 1);
        CHECK(census.key_values == 1 + W);
        CHECK(census.arrays == W * cfg.ios_per_process);
        CHECK(census.unreferenced_arrays == 0);
    }
    SECTION("no index at all") {
        cfg.mode = FieldStoreMode::NoIndex;
        auto backend = memory_pool();
        run_benchmark(backend, cfg);
        CensusReport census = take_census(backend->snapshot());
        CHECK(census.containers == 1);
        CHECK(census.key_values == 0);
        CHECK(census.arrays == W * cfg.ios_per_process);
        CHECK(census.unreferenced_arrays == 0);
    }
}

TEST_CASE("concurrent re-writes strand superseded versions and readers stay intact") {
    BenchmarkConfig cfg = base_config();
    cfg.pattern = Pattern::B;
    cfg.client_node_count = 2;  // one writer, one reader
    cfg.processes_per_client_node = 1;
    cfg.ios_per_process = 3;

    auto backend = memory_pool();
    EventLog log = run_benchmark(backend, cfg);

    // One setup I/O by the writer, then ios I/Os in each concurrent phase.
    REQUIRE(log.records.size() ==
            expected_phase_records(1, 1) + 2 * expected_phase_records(1, cfg.ios_per_process));
    check_worker_phase(log, Phase::Setup, 0, 0, 1);
    check_worker_phase(log, Phase::Write, 0, 0, cfg.ios_per_process);
    check_worker_phase(log, Phase::Read, 1, 0, cfg.ios_per_process);

    // Setup wrote version 0; every main-phase re-write strands the previous
    // version's array. Only the last one is still referenced.
    CensusReport census = take_census(backend->snapshot());
    CHECK(census.arrays == 1 + cfg.ios_per_process);
    CHECK(census.unreferenced_arrays == cfg.ios_per_process);
    CHECK(census.key_values == 2);

    // Both concurrent phases are present, so inter-phase offsets and the
    // combined write+read rate exist.
    MetricsReport report = build_report(log);
    REQUIRE(report.po0_ns.has_value());
    REQUIRE(report.pof_ns.has_value());
    REQUIRE(report.aggregated_bandwidth.has_value());
    CHECK(*report.aggregated_bandwidth > 0.0);
}

TEST_CASE("segment driver moves bare arrays inside synchronized phases") {
    BenchmarkConfig cfg = base_config();
    cfg.driver = Driver::IorSegments;
    cfg.client_node_count = 2;
    cfg.processes_per_client_node = 2;
    cfg.ios_per_process = 4;
    cfg.object_size = 8 * kKiB;

    auto backend = memory_pool();
    EventLog log = run_benchmark(backend, cfg);
    const unsigned W = cfg.total_workers();
    const std::uint64_t per_worker_bytes = cfg.object_size * cfg.ios_per_process;

    CHECK(log.echo.at("driver") == "ior");
    CHECK(log.echo.count("mode") == 0);
    CHECK(is_synchronized_log(log));
    REQUIRE(log.records.size() == 2 * expected_phase_records(W, 1));
    for (unsigned node = 0; node < 2; ++node)
        for (unsigned proc = 0; proc < 2; ++proc) {
            check_worker_phase(log, Phase::Write, node, proc, 1);
            check_worker_phase(log, Phase::Read, node, proc, 1);
        }

    // Bare arrays in the shared container: no keys, nothing unreferenced.
    CensusReport census = take_census(backend->snapshot());
    CHECK(census.containers == 1);
    CHECK(census.key_values == 0);
    CHECK(census.arrays == W);
    CHECK(census.unreferenced_arrays == 0);

    MetricsReport report = build_report(log);
    for (Phase phase : {Phase::Write, Phase::Read}) {
        const PhaseMetrics& m = report.phases.at(phase);
        CHECK(m.io_count == W);
        CHECK(m.total_bytes == W * per_worker_bytes);
        REQUIRE(m.synchronous_bandwidth.has_value());
        CHECK(*m.synchronous_bandwidth > 0.0);
    }
    // Phases run one after the other here, so no combined rate is reported.
    CHECK_FALSE(report.aggregated_bandwidth.has_value());
}

TEST_CASE("simulated runs fill every worker's timeline without gaps") {
    BenchmarkConfig cfg = base_config();
    cfg.client_node_count = 2;
    cfg.processes_per_client_node = 2;
    cfg.ios_per_process = 3;
    cfg.object_size = 64 * kKiB;

    auto backend = std::make_shared<SimBackend>(sim_topology(), cfg.client_node_count);
    EventLog log = run_benchmark(backend, cfg);
    CHECK(log.echo.at("backend") == "sim");

    // The virtual clock only advances inside store operations, so with no
    // start skew each worker's next I/O starts exactly when the previous one
    // ended: the device never idles while a worker has work.
    for (Phase phase : {Phase::Write, Phase::Read})
        for (unsigned node = 0; node < 2; ++node)
            for (unsigned proc = 0; proc < 2; ++proc) {
                std::vector<std::int64_t> starts, ends;
                for (const auto& r : log.records) {
                    if (r.phase != phase || r.identity.client_node != node ||
                        r.identity.process != proc)
                        continue;
                    if (r.event == EventType::IoStart) starts.push_back(r.timestamp_ns);
                    if (r.event == EventType::IoEnd) ends.push_back(r.timestamp_ns);
                }
                REQUIRE(starts.size() == cfg.ios_per_process);
                REQUIRE(ends.size() == cfg.ios_per_process);
                for (std::size_t i = 1; i < starts.size(); ++i)
                    CHECK(starts[i] == ends[i - 1]);
            }
}

TEST_CASE("simulated runs are bit-for-bit reproducible") {
    BenchmarkConfig cfg = base_config();
    cfg.client_node_count = 2;
    cfg.processes_per_client_node = 2;
    cfg.ios_per_process = 3;
    cfg.object_size = 64 * kKiB;
    cfg.start_skew_ns = 200'000;  // exercise the jitter path too

    auto run_once = [&] {
        auto backend = std::make_shared<SimBackend>(sim_topology(), cfg.client_node_count);
        return serialize_log(run_benchmark(backend, cfg));
    };
    std::string first = run_once();
    std::string second = run_once();
    REQUIRE(first == second);

    // The skew must be visible (someone started late) yet bounded by the cap.
    EventLog log = parse_log(first);
    auto offsets = io_offsets(log, Phase::Write);
    CHECK(offsets.off0_ns > 0);
    CHECK(offsets.off0_ns <= cfg.start_skew_ns);
}

TEST_CASE("real engine releases surviving workers when one fails") {
    detail::RealEngine engine(2, 1);
    // Worker 0 dies before ever reaching the barrier; worker 1 is already
    // waiting at it. Without the failure path draining the barrier this
    // would deadlock rather than throw.
    CHECK_THROWS_WITH(engine.run([&](unsigned w) {
                          if (w == 0) throw RunError("boom");
                          engine.barrier_wait(0);
                      }),
                      ContainsSubstring("boom"));
}

TEST_CASE("root-cause worker failures outrank scheduler stall verdicts") {
    std::vector<std::exception_ptr> errors(3);
    errors[0] = std::make_exception_ptr(
        RunError("virtual scheduler stalled: all workers blocked with no pending event"));
    errors[2] = std::make_exception_ptr(detail::WorkerError("worker node 1 process 0: boom"));
    CHECK_THROWS_WITH(detail::RealEngine::rethrow_preferred(errors),
                      ContainsSubstring("worker node 1 process 0"));

    // With only collateral damage available, the first error wins.
    errors[2] = nullptr;
    CHECK_THROWS_WITH(detail::RealEngine::rethrow_preferred(errors),
                      ContainsSubstring("stalled"));
}

TEST_CASE("worker failures are reported with the worker's name") {
    SECTION("ordinary errors gain the worker prefix") {
        bool caught = false;
        try {
            try {
                throw NotFoundError("field array is missing");
            } catch (...) {
                detail::rethrow_as_worker_failure(2, 5);
            }
        } catch (const detail::WorkerError& e) {
            caught = true;
            CHECK_THAT(e.what(), ContainsSubstring("worker node 2 process 5"));
            CHECK_THAT(e.what(), ContainsSubstring("field array is missing"));
        }
        CHECK(caught);
    }
    SECTION("scheduler verdicts pass through untouched") {
        bool caught = false;
        try {
            try {
                throw RunError("virtual scheduler stalled: all workers blocked");
            } catch (...) {
                detail::rethrow_as_worker_failure(2, 5);
            }
        } catch (const detail::WorkerError&) {
            FAIL("stall verdict must not be attributed to a worker");
        } catch (const RunError& e) {
            caught = true;
            CHECK_THAT(e.what(), !ContainsSubstring("worker node"));
        }
        CHECK(caught);
    }
    SECTION("an already-named failure is not wrapped twice") {
        bool caught = false;
        try {
            try {
                throw detail::WorkerError("worker node 0 process 0: boom");
            } catch (...) {
                detail::rethrow_as_worker_failure(2, 5);
            }
        } catch (const detail::WorkerError& e) {
            caught = true;
            CHECK_THAT(e.what(), !ContainsSubstring("process 5"));
        }
        CHECK(caught);
    }
}

TEST_CASE("large runs keep the records-per-phase identity") {
    // Full-scale shape on the in-memory pool: 4 client nodes x 36 processes
    // x 2000 fields of 4 KiB, write phase plus read phase.
    BenchmarkConfig cfg;
    cfg.pattern = Pattern::A;
    cfg.mode = FieldStoreMode::NoIndex;
    cfg.server_node_count = 2;
    cfg.client_node_count = 4;
    cfg.processes_per_client_node = 36;
    cfg.ios_per_process = 2000;
    cfg.object_size = 4 * kKiB;
    cfg.seed = 7;

    auto backend = memory_pool();
    EventLog log = run_benchmark(backend, cfg);

    const unsigned W = cfg.total_workers();
    REQUIRE(W == 144);
    CHECK(log.records.size() == 2 * expected_phase_records(W, cfg.ios_per_process));
    CHECK(expected_phase_records(W, cfg.ios_per_process) == 144u * 16002u);

    CensusReport census = take_census(backend->snapshot());
    CHECK(census.arrays == static_cast<std::uint64_t>(W) * cfg.ios_per_process);
    CHECK(census.unreferenced_arrays == 0);
}
