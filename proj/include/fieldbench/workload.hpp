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

#include <barrier>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "fieldbench/backend.hpp"
#include "fieldbench/field_store.hpp"
#include "fieldbench/payload.hpp"
#include "fieldbench/sim_backend.hpp"
#include "fieldbench/telemetry.hpp"

namespace fieldbench {

enum class Pattern { A, B };
enum class Driver { FieldIo, IorSegments };
enum class Contention { SharedForecastIndex, PerProcessForecastIndex };

inline const char* to_string(Pattern p) { return p == Pattern::A ? "a" : "b"; }
inline const char* to_string(Driver d) { return d == Driver::FieldIo ? "fieldio" : "ior"; }
inline const char* to_string(Contention c) {
    return c == Contention::SharedForecastIndex ? "shared" : "perproc";
}

inline Pattern pattern_from_string(std::string_view text) {
    if (text == "a" || text == "A") return Pattern::A;
    if (text == "b" || text == "B") return Pattern::B;
    throw ConfigError("unknown pattern '" + std::string(text) + "' (expected a or b)");
}

inline Driver driver_from_string(std::string_view text) {
    if (text == "fieldio") return Driver::FieldIo;
    if (text == "ior") return Driver::IorSegments;
    throw ConfigError("unknown driver '" + std::string(text) + "' (expected fieldio or ior)");
}

inline Contention contention_from_string(std::string_view text) {
    if (text == "shared") return Contention::SharedForecastIndex;
    if (text == "perproc") return Contention::PerProcessForecastIndex;
    throw ConfigError("unknown contention '" + std::string(text) +
                      "' (expected shared or perproc)");
}

/// Everything one benchmark run needs. The parameter grid of the underlying
/// study is advisory; any positive values validate.
struct BenchmarkConfig {
    Pattern pattern = Pattern::A;
    Driver driver = Driver::FieldIo;
    FieldStoreMode mode = FieldStoreMode::Full;
    unsigned server_node_count = 1;
    unsigned client_node_count = 1;
    unsigned processes_per_client_node = 1;
    unsigned ios_per_process = 1;
    std::uint64_t object_size = 1 << 20;
    Contention contention = Contention::PerProcessForecastIndex;
    ObjectClass kv_object_class = ObjectClass::SX;
    ObjectClass array_object_class = ObjectClass::S1;
    unsigned repetitions = 1;
    std::uint64_t seed = 0;
    /// Simulated runs: maximum seeded per-worker jitter injected after each
    /// phase-start barrier, so offset metrics measure something real.
    std::int64_t start_skew_ns = 0;

    unsigned total_workers() const { return client_node_count * processes_per_client_node; }

    void validate() const {
        if (server_node_count == 0) throw ConfigError("server_node_count must be positive");
        if (client_node_count == 0) throw ConfigError("client_node_count must be positive");
        if (processes_per_client_node == 0)
            throw ConfigError("processes_per_client_node must be positive");
        if (ios_per_process == 0) throw ConfigError("ios_per_process must be positive");
        if (repetitions == 0) throw ConfigError("repetitions must be positive");
        if (object_size < payload::kHeaderBytes)
            throw ConfigError("object_size must be at least " +
                              std::to_string(payload::kHeaderBytes) + " bytes");
        if (start_skew_ns < 0) throw ConfigError("start_skew_ns must be non-negative");
        if (driver == Driver::FieldIo && pattern == Pattern::B && total_workers() % 2 != 0)
            throw ConfigError(
                "pattern b needs an even total process count "
                "(client_node_count x processes_per_client_node)");
    }
};

/// Deterministic, collision-free field key for one I/O. The most-significant
/// half (the forecast) is one shared forecast under SharedForecastIndex and
/// a per-process forecast otherwise; the least-significant half pins the
/// exact writer and iteration, so no two I/Os of a run share a key.
inline FieldKey generate_field_key(const WorkerIdentity& id, Contention contention) {
    FieldKey key;
    key.most_significant.emplace("class", "bench");
    if (contention == Contention::SharedForecastIndex) {
        key.most_significant.emplace("stream", "shared");
    } else {
        key.most_significant.emplace("node", std::to_string(id.client_node));
        key.most_significant.emplace("proc", std::to_string(id.process));
    }
    key.least_significant.emplace("src", std::to_string(id.client_node) + "." +
                                             std::to_string(id.process));
    key.least_significant.emplace("step", std::to_string(id.iteration));
    return key;
}

namespace detail {

/// A worker failure that names its worker, as opposed to secondary failures
/// (e.g. peers aborted at a barrier after the first error).
class WorkerError : public RunError {
  public:
    using RunError::RunError;
};

/// Execution substrate for one run: spawns workers, provides the clock and
/// the barriers. One implementation runs on real threads and the wall clock,
/// the other on the simulated backend's virtual clock.
class Engine {
  public:
    virtual ~Engine() = default;
    virtual std::int64_t now() = 0;
    virtual void barrier_wait(unsigned index) = 0;
    virtual void sleep_ns(std::int64_t ns) = 0;
    /// Runs body(0..workers-1) concurrently; rethrows the most root-cause
    /// worker failure.
    virtual void run(const std::function<void(unsigned)>& body) = 0;
};

class RealEngine final : public Engine {
  public:
    RealEngine(unsigned workers, unsigned barrier_count) : workers_(workers) {
        barriers_.reserve(barrier_count);
        for (unsigned b = 0; b < barrier_count; ++b)
            barriers_.push_back(std::make_unique<std::barrier<>>(workers));
    }

    std::int64_t now() override {
        return std::chrono::steady_clock::now().time_since_epoch().count();
    }

    void barrier_wait(unsigned index) override {
        barriers_.at(index)->arrive_and_wait();
        t_next_barrier = index + 1;
    }

    void sleep_ns(std::int64_t ns) override {
        if (ns > 0) std::this_thread::sleep_for(std::chrono::nanoseconds(ns));
    }

    void run(const std::function<void(unsigned)>& body) override {
        std::vector<std::exception_ptr> errors(workers_);
        std::vector<std::thread> threads;
        threads.reserve(workers_);
        for (unsigned w = 0; w < workers_; ++w)
            threads.emplace_back([&, w] {
                t_next_barrier = 0;
                try {
                    body(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                    // Withdraw from every barrier this worker has not reached
                    // yet, so surviving workers do not wait for it forever.
                    for (unsigned b = t_next_barrier; b < barriers_.size(); ++b)
                        barriers_[b]->arrive_and_drop();
                }
            });
        for (auto& t : threads) t.join();
        rethrow_preferred(errors);
    }

    /// Prefers a failure that names its worker over collateral ones.
    static void rethrow_preferred(const std::vector<std::exception_ptr>& errors) {
        std::exception_ptr fallback;
        for (const auto& e : errors) {
            if (!e) continue;
            if (!fallback) fallback = e;
            try {
                std::rethrow_exception(e);
            } catch (const WorkerError&) {
                throw;
            } catch (...) {
            }
        }
        if (fallback) std::rethrow_exception(fallback);
    }

  private:
    inline static thread_local unsigned t_next_barrier = 0;

    unsigned workers_;
    std::vector<std::unique_ptr<std::barrier<>>> barriers_;
};

class SimEngine final : public Engine {
  public:
    SimEngine(VirtualScheduler& sched, unsigned workers, unsigned barrier_count,
              unsigned processes_per_client_node)
        : sched_(sched), workers_(workers), procs_per_node_(processes_per_client_node) {
        barriers_.reserve(barrier_count);
        for (unsigned b = 0; b < barrier_count; ++b)
            barriers_.push_back(sched_.make_barrier(workers));
    }

    std::int64_t now() override { return sched_.now(); }

    void barrier_wait(unsigned index) override { sched_.barrier_wait(barriers_.at(index)); }

    void sleep_ns(std::int64_t ns) override {
        if (ns > 0) sched_.sleep_ns(ns);
    }

    void run(const std::function<void(unsigned)>& body) override {
        std::vector<std::exception_ptr> errors(workers_);
        std::vector<std::thread> threads;
        threads.reserve(workers_);
        sched_.expect_workers(workers_);
        for (unsigned w = 0; w < workers_; ++w)
            threads.emplace_back([&, w] {
                sched_.attach(w, w / procs_per_node_);
                try {
                    body(w);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
                sched_.detach();
            });
        for (auto& t : threads) t.join();
        RealEngine::rethrow_preferred(errors);
    }

  private:
    VirtualScheduler& sched_;
    unsigned workers_;
    unsigned procs_per_node_;
    std::vector<unsigned> barriers_;
};

inline unsigned node_of(const BenchmarkConfig& cfg, unsigned w) {
    return w / cfg.processes_per_client_node;
}

inline unsigned proc_of(const BenchmarkConfig& cfg, unsigned w) {
    return w % cfg.processes_per_client_node;
}

/// Seeded per-worker delay injected right after a phase-start barrier, so a
/// simulated run has measurable (and reproducible) worker start offsets.
inline std::int64_t phase_jitter(const BenchmarkConfig& cfg, std::uint64_t phase_salt,
                                 unsigned w) {
    if (cfg.start_skew_ns <= 0) return 0;
    std::uint64_t h = payload::detail::mix64(
        cfg.seed ^ phase_salt ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(w) + 1)));
    return static_cast<std::int64_t>(h % static_cast<std::uint64_t>(cfg.start_skew_ns + 1));
}

inline constexpr std::uint64_t kWriteJitterSalt = 0x77726974652d6a74ull;
inline constexpr std::uint64_t kReadJitterSalt = 0x726561642d6a7474ull;

/// Re-raises the in-flight exception, naming the worker — except scheduler
/// verdicts (stalls), which stay as-is so collateral victims of another
/// worker's failure are never mistaken for the root cause.
[[noreturn]] inline void rethrow_as_worker_failure(unsigned node, unsigned proc) {
    const std::string who =
        "worker node " + std::to_string(node) + " process " + std::to_string(proc) + ": ";
    try {
        throw;
    } catch (const WorkerError&) {
        throw;
    } catch (const RunError& e) {
        if (std::string_view(e.what()).rfind("virtual scheduler", 0) == 0) throw;
        throw WorkerError(who + e.what());
    } catch (const std::exception& e) {
        throw WorkerError(who + e.what());
    }
}

inline std::map<std::string, std::string> make_echo(const Backend& backend,
                                                    const BenchmarkConfig& cfg) {
    std::map<std::string, std::string> echo{
        {"backend", backend.is_simulated() ? "sim" : "memory"},
        {"driver", to_string(cfg.driver)},
        {"iterations", std::to_string(cfg.ios_per_process)},
        {"nodes", std::to_string(cfg.client_node_count)},
        {"object_size", std::to_string(cfg.object_size)},
        {"pattern", to_string(cfg.pattern)},
        {"procs_per_node", std::to_string(cfg.processes_per_client_node)},
        {"seed", std::to_string(cfg.seed)},
        {"servers", std::to_string(cfg.server_node_count)},
    };
    if (cfg.driver == Driver::FieldIo) {
        echo.emplace("contention", to_string(cfg.contention));
        echo.emplace("mode", to_string(cfg.mode));
    }
    if (cfg.start_skew_ns > 0) echo.emplace("start_skew_ns", std::to_string(cfg.start_skew_ns));
    return echo;
}

/// Write-then-read: every process writes its own fields, a barrier separates
/// the phases, then a second set of store instances reads everything back and
/// checks payload integrity. Barriers: 0 = writes start, 1 = writes done,
/// 2 = reads start (after the read-side stores are open).
inline EventLog run_pattern_a(const std::shared_ptr<Backend>& backend,
                              const BenchmarkConfig& cfg, Engine& engine) {
    const unsigned W = cfg.total_workers();
    const unsigned ios = cfg.ios_per_process;
    auto clock = [&engine] { return engine.now(); };
    std::vector<EventBuffer> write_buffers;
    std::vector<EventBuffer> read_buffers;
    write_buffers.reserve(W);
    read_buffers.reserve(W);
    for (unsigned w = 0; w < W; ++w) {
        write_buffers.emplace_back(clock, expected_phase_records(1, ios));
        read_buffers.emplace_back(clock, expected_phase_records(1, ios));
    }

    engine.run([&](unsigned w) {
        const unsigned node = node_of(cfg, w);
        const unsigned proc = proc_of(cfg, w);
        try {
            FieldStoreConfig writer_cfg{cfg.mode, cfg.kv_object_class, cfg.array_object_class,
                                        16 + w};
            FieldStore writer = FieldStore::open(backend, writer_cfg);
            engine.barrier_wait(0);
            engine.sleep_ns(phase_jitter(cfg, kWriteJitterSalt, w));

            EventBuffer& wb = write_buffers[w];
            wb.record(Phase::Write, {node, proc, 0}, EventType::ExecStart);
            for (unsigned i = 0; i < ios; ++i) {
                WorkerIdentity id{node, proc, i};
                FieldKey key = generate_field_key(id, cfg.contention);
                Bytes data = payload::make(cfg.seed, {node, proc, i, 0, cfg.object_size});
                wb.record(Phase::Write, id, EventType::IoStart);
                wb.record(Phase::Write, id, EventType::OpenStart);
                auto op = writer.begin_write(key, cfg.object_size);
                wb.record(Phase::Write, id, EventType::OpenEnd);
                wb.record(Phase::Write, id, EventType::TransferStart);
                writer.transfer_write(op, data);
                wb.record(Phase::Write, id, EventType::TransferEnd, cfg.object_size);
                wb.record(Phase::Write, id, EventType::CloseStart);
                writer.finish_write(std::move(op));
                wb.record(Phase::Write, id, EventType::CloseEnd);
                wb.record(Phase::Write, id, EventType::IoEnd);
            }
            wb.record(Phase::Write, {node, proc, ios - 1}, EventType::ExecEnd);

            engine.barrier_wait(1);
            FieldStoreConfig reader_cfg{cfg.mode, cfg.kv_object_class, cfg.array_object_class,
                                        16 + W + w};
            FieldStore reader = FieldStore::open(backend, reader_cfg);
            engine.barrier_wait(2);
            engine.sleep_ns(phase_jitter(cfg, kReadJitterSalt, w));

            EventBuffer& rb = read_buffers[w];
            rb.record(Phase::Read, {node, proc, 0}, EventType::ExecStart);
            for (unsigned i = 0; i < ios; ++i) {
                WorkerIdentity id{node, proc, i};
                FieldKey key = generate_field_key(id, cfg.contention);
                rb.record(Phase::Read, id, EventType::IoStart);
                rb.record(Phase::Read, id, EventType::OpenStart);
                auto op = reader.begin_read(key);
                rb.record(Phase::Read, id, EventType::OpenEnd);
                rb.record(Phase::Read, id, EventType::TransferStart);
                Bytes data = reader.transfer_read(op);
                rb.record(Phase::Read, id, EventType::TransferEnd, data.size());
                rb.record(Phase::Read, id, EventType::CloseStart);
                reader.finish_read(std::move(op));
                rb.record(Phase::Read, id, EventType::CloseEnd);
                rb.record(Phase::Read, id, EventType::IoEnd);

                payload::Tag expect{node, proc, i, 0, cfg.object_size};
                payload::Tag got = payload::verify(cfg.seed, data);
                if (!(got == expect))
                    throw RunError("read-back payload carries the wrong tag for iteration " +
                                   std::to_string(i));
            }
            rb.record(Phase::Read, {node, proc, ios - 1}, EventType::ExecEnd);
        } catch (...) {
            rethrow_as_worker_failure(node, proc);
        }
    });

    std::vector<EventBuffer> all;
    all.reserve(2 * W);
    for (auto& b : write_buffers) all.push_back(std::move(b));
    for (auto& b : read_buffers) all.push_back(std::move(b));
    return merge_logs(std::move(all), make_echo(*backend, cfg));
}

/// Concurrent re-write/re-read: the first half of the workers each repeatedly
/// re-write one designated field while a paired worker in the second half
/// reads it back concurrently, checking that every observed payload is some
/// intact committed version. Barriers: 0 = setup start, 1 = main phases start.
inline EventLog run_pattern_b(const std::shared_ptr<Backend>& backend,
                              const BenchmarkConfig& cfg, Engine& engine) {
    const unsigned W = cfg.total_workers();
    const unsigned half = W / 2;
    const unsigned ios = cfg.ios_per_process;
    auto clock = [&engine] { return engine.now(); };
    std::vector<EventBuffer> setup_buffers;
    std::vector<EventBuffer> write_buffers;
    std::vector<EventBuffer> read_buffers;
    setup_buffers.reserve(half);
    write_buffers.reserve(half);
    read_buffers.reserve(half);
    for (unsigned w = 0; w < half; ++w) {
        setup_buffers.emplace_back(clock, expected_phase_records(1, 1));
        write_buffers.emplace_back(clock, expected_phase_records(1, ios));
        read_buffers.emplace_back(clock, expected_phase_records(1, ios));
    }

    engine.run([&](unsigned w) {
        const unsigned node = node_of(cfg, w);
        const unsigned proc = proc_of(cfg, w);
        try {
            FieldStoreConfig store_cfg{cfg.mode, cfg.kv_object_class, cfg.array_object_class,
                                       16 + w};
            FieldStore store = FieldStore::open(backend, store_cfg);
            const bool is_writer = w < half;
            const unsigned designated = is_writer ? w : w - half;
            const unsigned dnode = node_of(cfg, designated);
            const unsigned dproc = proc_of(cfg, designated);
            const FieldKey key =
                generate_field_key({dnode, dproc, 0}, cfg.contention);

            engine.barrier_wait(0);
            if (is_writer) {
                EventBuffer& sb = setup_buffers[w];
                WorkerIdentity id{node, proc, 0};
                Bytes data = payload::make(cfg.seed, {dnode, dproc, 0, 0, cfg.object_size});
                sb.record(Phase::Setup, id, EventType::ExecStart);
                sb.record(Phase::Setup, id, EventType::IoStart);
                sb.record(Phase::Setup, id, EventType::OpenStart);
                auto op = store.begin_write(key, cfg.object_size);
                sb.record(Phase::Setup, id, EventType::OpenEnd);
                sb.record(Phase::Setup, id, EventType::TransferStart);
                store.transfer_write(op, data);
                sb.record(Phase::Setup, id, EventType::TransferEnd, cfg.object_size);
                sb.record(Phase::Setup, id, EventType::CloseStart);
                store.finish_write(std::move(op));
                sb.record(Phase::Setup, id, EventType::CloseEnd);
                sb.record(Phase::Setup, id, EventType::IoEnd);
                sb.record(Phase::Setup, id, EventType::ExecEnd);
            }

            engine.barrier_wait(1);
            engine.sleep_ns(
                phase_jitter(cfg, is_writer ? kWriteJitterSalt : kReadJitterSalt, w));

            if (is_writer) {
                EventBuffer& wb = write_buffers[w];
                wb.record(Phase::Write, {node, proc, 0}, EventType::ExecStart);
                for (unsigned i = 0; i < ios; ++i) {
                    WorkerIdentity id{node, proc, i};
                    Bytes data =
                        payload::make(cfg.seed, {dnode, dproc, 0, i + 1, cfg.object_size});
                    wb.record(Phase::Write, id, EventType::IoStart);
                    wb.record(Phase::Write, id, EventType::OpenStart);
                    auto op = store.begin_write(key, cfg.object_size);
                    wb.record(Phase::Write, id, EventType::OpenEnd);
                    wb.record(Phase::Write, id, EventType::TransferStart);
                    store.transfer_write(op, data);
                    wb.record(Phase::Write, id, EventType::TransferEnd, cfg.object_size);
                    wb.record(Phase::Write, id, EventType::CloseStart);
                    store.finish_write(std::move(op));
                    wb.record(Phase::Write, id, EventType::CloseEnd);
                    wb.record(Phase::Write, id, EventType::IoEnd);
                }
                wb.record(Phase::Write, {node, proc, ios - 1}, EventType::ExecEnd);
            } else {
                EventBuffer& rb = read_buffers[w - half];
                rb.record(Phase::Read, {node, proc, 0}, EventType::ExecStart);
                for (unsigned i = 0; i < ios; ++i) {
                    WorkerIdentity id{node, proc, i};
                    rb.record(Phase::Read, id, EventType::IoStart);
                    rb.record(Phase::Read, id, EventType::OpenStart);
                    auto op = store.begin_read(key);
                    rb.record(Phase::Read, id, EventType::OpenEnd);
                    rb.record(Phase::Read, id, EventType::TransferStart);
                    Bytes data = store.transfer_read(op);
                    rb.record(Phase::Read, id, EventType::TransferEnd, data.size());
                    rb.record(Phase::Read, id, EventType::CloseStart);
                    store.finish_read(std::move(op));
                    rb.record(Phase::Read, id, EventType::CloseEnd);
                    rb.record(Phase::Read, id, EventType::IoEnd);

                    payload::Tag got = payload::verify(cfg.seed, data);
                    if (got.client_node != dnode || got.process != dproc ||
                        got.iteration != 0 || got.sequence > ios ||
                        got.size != cfg.object_size)
                        throw RunError(
                            "concurrent read observed a payload that matches no committed "
                            "version (iteration " +
                            std::to_string(i) + ")");
                }
                rb.record(Phase::Read, {node, proc, ios - 1}, EventType::ExecEnd);
            }
        } catch (...) {
            rethrow_as_worker_failure(node, proc);
        }
    });

    std::vector<EventBuffer> all;
    all.reserve(3 * half);
    for (auto& b : setup_buffers) all.push_back(std::move(b));
    for (auto& b : write_buffers) all.push_back(std::move(b));
    for (auto& b : read_buffers) all.push_back(std::move(b));
    return merge_logs(std::move(all), make_echo(*backend, cfg));
}

/// Segmented-object baseline: each worker owns one plain array object in a
/// shared container and moves all its data in a single contiguous transfer
/// per phase, with barrier-aligned phases the way MPI I/O benchmarks
/// synchronize their timing sections. Barriers 0-3 fence the write phase
/// (before ExecStart, before IoStart, after IoEnd, after ExecEnd); barriers
/// 4-7 do the same for the read-back phase.
inline EventLog run_ior_segments(const std::shared_ptr<Backend>& backend,
                                 const BenchmarkConfig& cfg, Engine& engine) {
    const unsigned W = cfg.total_workers();
    const std::uint64_t transfer_bytes = cfg.object_size * cfg.ios_per_process;
    auto clock = [&engine] { return engine.now(); };
    std::vector<EventBuffer> write_buffers;
    std::vector<EventBuffer> read_buffers;
    write_buffers.reserve(W);
    read_buffers.reserve(W);
    for (unsigned w = 0; w < W; ++w) {
        write_buffers.emplace_back(clock, expected_phase_records(1, 1));
        read_buffers.emplace_back(clock, expected_phase_records(1, 1));
    }

    const ContainerId container_id = FieldStore::main_container_id();
    engine.run([&](unsigned w) {
        const unsigned node = node_of(cfg, w);
        const unsigned proc = proc_of(cfg, w);
        try {
            ContainerHandle container = [&] {
                try {
                    return backend->create_container(container_id);
                } catch (const AlreadyExistsError&) {
                    return backend->open_container(container_id);
                }
            }();
            const ObjectId oid = ObjectId::make(cfg.array_object_class, 16 + w, 0);
            const WorkerIdentity id{node, proc, 0};
            const payload::Tag tag{node, proc, 0, 0, transfer_bytes};
            const Bytes data = payload::make(cfg.seed, tag);

            engine.barrier_wait(0);
            EventBuffer& wb = write_buffers[w];
            wb.record(Phase::Write, id, EventType::ExecStart);
            engine.barrier_wait(1);
            wb.record(Phase::Write, id, EventType::IoStart);
            wb.record(Phase::Write, id, EventType::OpenStart);
            ArrayHandle array = backend->array_create(container, oid);
            wb.record(Phase::Write, id, EventType::OpenEnd);
            wb.record(Phase::Write, id, EventType::TransferStart);
            backend->array_write(array, 0, data);
            wb.record(Phase::Write, id, EventType::TransferEnd, transfer_bytes);
            wb.record(Phase::Write, id, EventType::CloseStart);
            backend->close_array(array);
            wb.record(Phase::Write, id, EventType::CloseEnd);
            wb.record(Phase::Write, id, EventType::IoEnd);
            engine.barrier_wait(2);
            wb.record(Phase::Write, id, EventType::ExecEnd);
            engine.barrier_wait(3);

            engine.barrier_wait(4);
            EventBuffer& rb = read_buffers[w];
            rb.record(Phase::Read, id, EventType::ExecStart);
            engine.barrier_wait(5);
            rb.record(Phase::Read, id, EventType::IoStart);
            rb.record(Phase::Read, id, EventType::OpenStart);
            ArrayHandle read_array = backend->array_open(container, oid);
            rb.record(Phase::Read, id, EventType::OpenEnd);
            rb.record(Phase::Read, id, EventType::TransferStart);
            Bytes read_back = backend->array_read(read_array, 0, transfer_bytes);
            rb.record(Phase::Read, id, EventType::TransferEnd, transfer_bytes);
            rb.record(Phase::Read, id, EventType::CloseStart);
            backend->close_array(read_array);
            rb.record(Phase::Read, id, EventType::CloseEnd);
            rb.record(Phase::Read, id, EventType::IoEnd);
            engine.barrier_wait(6);
            rb.record(Phase::Read, id, EventType::ExecEnd);
            engine.barrier_wait(7);

            payload::Tag got = payload::verify(cfg.seed, read_back);
            if (!(got == tag)) throw RunError("read-back payload carries the wrong tag");
        } catch (...) {
            rethrow_as_worker_failure(node, proc);
        }
    });

    std::vector<EventBuffer> all;
    all.reserve(2 * W);
    for (auto& b : write_buffers) all.push_back(std::move(b));
    for (auto& b : read_buffers) all.push_back(std::move(b));
    return merge_logs(std::move(all), make_echo(*backend, cfg));
}

}  // namespace detail

/// Runs one benchmark repetition against `backend` and returns the merged
/// event log. Simulated backends run on the virtual clock with determinism
/// guaranteed; any other backend runs on real threads and the steady clock.
inline EventLog run_benchmark(const std::shared_ptr<Backend>& backend,
                              const BenchmarkConfig& cfg) {
    cfg.validate();
    const unsigned workers = cfg.total_workers();
    const unsigned barrier_count =
        cfg.driver == Driver::IorSegments ? 8u : (cfg.pattern == Pattern::A ? 3u : 2u);

    std::unique_ptr<detail::Engine> engine;
    if (auto* sim = dynamic_cast<SimBackend*>(backend.get()))
        engine = std::make_unique<detail::SimEngine>(sim->scheduler(), workers, barrier_count,
                                                     cfg.processes_per_client_node);
    else
        engine = std::make_unique<detail::RealEngine>(workers, barrier_count);

    if (cfg.driver == Driver::IorSegments)
        return detail::run_ior_segments(backend, cfg, *engine);
    if (cfg.pattern == Pattern::A) return detail::run_pattern_a(backend, cfg, *engine);
    return detail::run_pattern_b(backend, cfg, *engine);
}

}  // namespace fieldbench
