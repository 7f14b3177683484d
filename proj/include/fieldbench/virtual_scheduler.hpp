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
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "fieldbench/flow_model.hpp"
#include "fieldbench/object.hpp"
#include "fieldbench/topology.hpp"

namespace fieldbench {

namespace detail {
class VirtualSchedulerTls;
}

/// Deterministic virtual-time scheduler for the simulated backend.
///
/// Workers are real threads, but at most one runs at a time: every simulated
/// operation blocks its caller until the scheduler completes it in virtual
/// time. When the last running worker blocks, it advances the clock by firing
/// exactly one pending event — the earliest by (time, worker, sequence) — and
/// wakes that event's owner. Storage effects execute inside the advance, so
/// all state changes happen serially in a reproducible order and two runs of
/// the same program produce identical virtual timelines.
///
/// Transfers are fluid flows sharing per-target, per-server-interface and
/// per-client-interface capacities under max-min fairness; their completion
/// times come from the flow model. Everything else costs per_op_latency.
class VirtualScheduler {
public:
    VirtualScheduler(const SimTopology& topo, unsigned client_node_count)
        : topo_(topo), client_nodes_(client_node_count == 0 ? 1 : client_node_count) {
        topo_.validate();
        const unsigned t = topo_.target_count();
        const unsigned n = topo_.server_node_count;
        for (int dir = 0; dir < 2; ++dir) {
            std::vector<long double> caps;
            caps.reserve(t + n + client_nodes_);
            const long double tbw = dir == 0
                                        ? static_cast<long double>(topo_.per_target_bandwidth)
                                        : static_cast<long double>(topo_.target_read_bandwidth());
            for (unsigned i = 0; i < t; ++i) caps.push_back(tbw);
            for (unsigned i = 0; i < n; ++i)
                caps.push_back(static_cast<long double>(topo_.per_interface_bandwidth));
            for (unsigned i = 0; i < client_nodes_; ++i)
                caps.push_back(static_cast<long double>(topo_.client_interface_capacity()));
            networks_[dir].emplace(std::move(caps));
            target_bytes_[dir].assign(t, 0);
        }
    }

    VirtualScheduler(const VirtualScheduler&) = delete;
    VirtualScheduler& operator=(const VirtualScheduler&) = delete;

    const SimTopology& topology() const { return topo_; }
    unsigned client_node_count() const { return client_nodes_; }

    /// Declare n workers about to start. Must be called before their threads
    /// are spawned so an early starter cannot advance the clock alone.
    void expect_workers(unsigned n) {
        std::lock_guard lock(mu_);
        live_ += n;
    }

    /// Bind the calling thread to a worker slot. Slots of concurrently live
    /// workers must be distinct.
    void attach(unsigned slot, unsigned client_node);

    /// Mark the calling worker finished; it must not issue further ops.
    void detach();

    /// True when the calling thread is attached to this scheduler.
    bool has_context() const;

    /// Current virtual time in nanoseconds.
    std::int64_t now() const {
        std::lock_guard lock(mu_);
        return now_;
    }

    /// Block the calling worker for `ns` of virtual time.
    void sleep_ns(std::int64_t ns) {
        std::unique_lock lock(mu_);
        require_context();
        push_timer(now_ + (ns < 0 ? 0 : ns), current_slot(), nullptr);
        block_and_wait(lock, current_slot());
    }

    /// One metadata-class operation: costs per_op_latency, then `effect`
    /// runs (serially, in virtual-time order). Thrown exceptions surface at
    /// the caller. Unattached callers execute the effect immediately at the
    /// current virtual time (untimed mode, for setup and inspection).
    void op_latency(std::function<void()> effect) {
        std::unique_lock lock(mu_);
        if (!has_context()) {
            if (effect) effect();
            return;
        }
        const unsigned slot = current_slot();
        push_timer(now_ + static_cast<std::int64_t>(topo_.per_op_latency_ns), slot,
                   std::move(effect));
        block_and_wait(lock, slot);
    }

    /// One transfer: per_op_latency, then `bytes` flow through the network
    /// shared with all concurrent transfers; `effect` runs at completion.
    void op_transfer(FlowDirection dir, std::uint64_t bytes, const ObjectId& object,
                     std::function<void()> effect) {
        std::unique_lock lock(mu_);
        if (!has_context()) {
            if (effect) effect();
            return;
        }
        const unsigned slot = current_slot();
        push_timer(now_ + static_cast<std::int64_t>(topo_.per_op_latency_ns), slot, nullptr);
        block_and_wait(lock, slot);
        if (bytes == 0) {
            if (effect) effect();
            return;
        }
        flows_.push_back(make_flow(slot, dir, bytes, object, std::move(effect)));
        recompute_rates();
        block_and_wait(lock, slot);
    }

    /// Create a rendezvous for `expected` workers. Workers block on arrival;
    /// when the last arrives, all are released at that virtual instant.
    unsigned make_barrier(unsigned expected) {
        std::lock_guard lock(mu_);
        if (expected == 0) throw InvalidArgumentError("barrier: expected must be > 0");
        barriers_.push_back(Barrier{expected, {}});
        return static_cast<unsigned>(barriers_.size() - 1);
    }

    void barrier_wait(unsigned barrier) {
        std::unique_lock lock(mu_);
        require_context();
        if (barrier >= barriers_.size()) throw InvalidArgumentError("barrier: unknown id");
        Barrier& b = barriers_[barrier];
        const unsigned slot = current_slot();
        b.arrived.push_back(slot);
        if (b.arrived.size() > b.expected)
            throw Error(Errc::internal, "barrier: more arrivals than expected");
        if (b.arrived.size() == b.expected) {
            std::sort(b.arrived.begin(), b.arrived.end());
            for (unsigned w : b.arrived) push_timer(now_, w, nullptr);
            b.arrived.clear();
        }
        block_and_wait(lock, slot);
    }

    /// Total bytes transferred to/from each target so far (Write, Read).
    std::vector<std::uint64_t> target_bytes(FlowDirection dir) const {
        std::lock_guard lock(mu_);
        return target_bytes_[dir == FlowDirection::Write ? 0 : 1];
    }

    /// Target a striped object's first cell lands on; cells continue
    /// round-robin over the object's stripe width from here.
    unsigned placement_start(const ObjectId& id) const {
        return static_cast<unsigned>(placement_hash(id) % topo_.target_count());
    }

    static std::uint64_t placement_hash(const ObjectId& id) {
        std::uint64_t x = id.user_lo() ^ (static_cast<std::uint64_t>(id.user_hi()) << 32) ^
                          (static_cast<std::uint64_t>(id.object_class()) << 56);
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    struct TimerEvent {
        std::int64_t time;
        unsigned worker;
        std::uint64_t seq;
        std::function<void()> effect;
    };
    struct TimerLater {
        bool operator()(const TimerEvent& a, const TimerEvent& b) const {
            if (a.time != b.time) return a.time > b.time;
            if (a.worker != b.worker) return a.worker > b.worker;
            return a.seq > b.seq;
        }
    };
    struct Flow {
        unsigned worker;
        std::uint64_t seq;
        int dir;  // 0 write, 1 read
        long double remaining;
        long double rate = 0.0L;
        std::vector<detail::FlowLoad> loads;
        std::vector<std::pair<unsigned, std::uint64_t>> target_bytes;
        std::function<void()> effect;
    };
    struct Barrier {
        unsigned expected;
        std::vector<unsigned> arrived;
    };

    void require_context() const {
        if (!has_context())
            throw Error(Errc::internal, "scheduler operation from unattached thread");
    }

    unsigned current_slot() const;

    void ensure_slot(unsigned slot) {
        if (slot >= woken_.size()) {
            woken_.resize(slot + 1, 0);
            pending_error_.resize(slot + 1);
        }
    }

    void push_timer(std::int64_t time, unsigned worker, std::function<void()> effect) {
        timers_.push(TimerEvent{time, worker, next_seq_++, std::move(effect)});
    }

    /// Caller holds mu_ and has queued whatever it waits for.
    void block_and_wait(std::unique_lock<std::mutex>& lock, unsigned slot) {
        ++blocked_;
        if (!failed_ && blocked_ == live_) advance();
        cv_.wait(lock, [&] { return woken_[slot] != 0 || failed_; });
        if (failed_) throw RunError(fail_message_);
        woken_[slot] = 0;
        if (pending_error_[slot]) {
            std::exception_ptr e = pending_error_[slot];
            pending_error_[slot] = nullptr;
            std::rethrow_exception(e);
        }
    }

    /// Fires exactly the earliest pending event. Caller holds mu_ and has
    /// observed full quiescence (blocked_ == live_).
    void advance() {
        if (failed_ || live_ == 0) return;

        constexpr long double kInf = std::numeric_limits<long double>::infinity();
        std::size_t best = flows_.size();
        long double best_t = kInf;
        for (std::size_t i = 0; i < flows_.size(); ++i) {
            const Flow& f = flows_[i];
            if (f.rate <= 0.0L) {
                fail_all("virtual scheduler: flow with zero rate");
                return;
            }
            long double t = flow_anchor_ + f.remaining / f.rate * 1e9L;
            if (best == flows_.size() || t < best_t ||
                (t == best_t && (f.worker < flows_[best].worker ||
                                 (f.worker == flows_[best].worker && f.seq < flows_[best].seq)))) {
                best = i;
                best_t = t;
            }
        }

        const bool have_timer = !timers_.empty();
        if (!have_timer && best == flows_.size()) {
            fail_all("virtual scheduler stalled: all workers blocked with no pending event");
            return;
        }

        const std::int64_t t_timer = have_timer ? timers_.top().time
                                                : std::numeric_limits<std::int64_t>::max();
        const std::int64_t t_flow = best != flows_.size()
                                        ? static_cast<std::int64_t>(std::ceil(best_t))
                                        : std::numeric_limits<std::int64_t>::max();

        if (t_timer <= t_flow) {
            TimerEvent ev = timers_.top();
            timers_.pop();
            if (ev.time > now_) now_ = ev.time;
            run_effect(ev.effect, ev.worker);
            wake(ev.worker);
        } else {
            if (t_flow > now_) now_ = t_flow;
            drain_flows_to(static_cast<long double>(now_));
            Flow done = std::move(flows_[best]);
            flows_.erase(flows_.begin() + static_cast<std::ptrdiff_t>(best));
            for (const auto& [target, bytes] : done.target_bytes)
                target_bytes_[done.dir][target] += bytes;
            recompute_rates();
            run_effect(done.effect, done.worker);
            wake(done.worker);
        }
    }

    void run_effect(std::function<void()>& effect, unsigned worker) {
        if (!effect) return;
        try {
            effect();
        } catch (...) {
            pending_error_[worker] = std::current_exception();
        }
    }

    void wake(unsigned worker) {
        woken_[worker] = 1;
        --blocked_;
        cv_.notify_all();
    }

    void fail_all(const std::string& message) {
        failed_ = true;
        fail_message_ = message;
        cv_.notify_all();
    }

    void drain_flows_to(long double t) {
        const long double dt = (t - flow_anchor_) / 1e9L;
        if (dt > 0.0L)
            for (Flow& f : flows_) {
                f.remaining -= f.rate * dt;
                if (f.remaining < 0.0L) f.remaining = 0.0L;
            }
        flow_anchor_ = t;
    }

    void recompute_rates() {
        drain_flows_to(static_cast<long double>(now_));
        for (int dir = 0; dir < 2; ++dir) {
            std::vector<const std::vector<detail::FlowLoad>*> specs;
            std::vector<Flow*> members;
            for (Flow& f : flows_)
                if (f.dir == dir) {
                    specs.push_back(&f.loads);
                    members.push_back(&f);
                }
            if (specs.empty()) continue;
            auto rates = networks_[dir]->allocate(specs);
            for (std::size_t i = 0; i < members.size(); ++i) members[i]->rate = rates[i];
        }
    }

    Flow make_flow(unsigned slot, FlowDirection dir, std::uint64_t bytes, const ObjectId& object,
                   std::function<void()> effect) {
        const unsigned t_count = topo_.target_count();
        const unsigned per_node = topo_.engines_per_node * topo_.targets_per_engine;
        const std::uint64_t cell = topo_.stripe_cell_bytes;
        const unsigned k = stripe_count(object.object_class(), t_count);
        const unsigned start = placement_start(object);
        const std::uint64_t cells = (bytes + cell - 1) / cell;
        const std::uint64_t tail_shortfall = cells * cell - bytes;

        Flow f;
        f.worker = slot;
        f.seq = next_seq_++;
        f.dir = dir == FlowDirection::Write ? 0 : 1;
        f.remaining = static_cast<long double>(bytes);
        f.effect = std::move(effect);

        std::vector<double> node_weight(topo_.server_node_count, 0.0);
        for (unsigned i = 0; i < k && i < cells; ++i) {
            std::uint64_t n_cells = cells / k + (i < cells % k ? 1 : 0);
            std::uint64_t b = n_cells * cell;
            if ((cells - 1) % k == i) b -= tail_shortfall;  // stripe owning the partial tail
            if (b == 0) continue;
            const unsigned target = (start + i) % t_count;
            const double w = static_cast<double>(b) / static_cast<double>(bytes);
            f.loads.push_back({target, w});
            f.target_bytes.emplace_back(target, b);
            node_weight[target / per_node] += w;
        }
        for (unsigned n = 0; n < topo_.server_node_count; ++n)
            if (node_weight[n] > 0.0) f.loads.push_back({t_count + n, node_weight[n]});
        f.loads.push_back({t_count + topo_.server_node_count + current_client_node(), 1.0});
        return f;
    }

    unsigned current_client_node() const;

    const SimTopology topo_;
    const unsigned client_nodes_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::int64_t now_ = 0;
    unsigned live_ = 0;
    unsigned blocked_ = 0;
    std::uint64_t next_seq_ = 0;
    bool failed_ = false;
    std::string fail_message_;

    std::vector<char> woken_;
    std::vector<std::exception_ptr> pending_error_;

    std::priority_queue<TimerEvent, std::vector<TimerEvent>, TimerLater> timers_;
    std::vector<Flow> flows_;
    long double flow_anchor_ = 0.0L;
    std::optional<detail::FlowNetwork> networks_[2];
    std::vector<std::uint64_t> target_bytes_[2];

    std::deque<Barrier> barriers_;
};

namespace detail {
/// Thread-local binding of a worker thread to its scheduler.
class VirtualSchedulerTls {
public:
    static const VirtualScheduler*& owner() {
        thread_local const VirtualScheduler* v = nullptr;
        return v;
    }
    static unsigned& slot() {
        thread_local unsigned v = 0;
        return v;
    }
    static unsigned& client_node() {
        thread_local unsigned v = 0;
        return v;
    }
};
}  // namespace detail

inline void VirtualScheduler::attach(unsigned slot, unsigned client_node) {
    std::lock_guard lock(mu_);
    if (client_node >= client_nodes_)
        throw InvalidArgumentError("scheduler attach: client node out of range");
    ensure_slot(slot);
    detail::VirtualSchedulerTls::owner() = this;
    detail::VirtualSchedulerTls::slot() = slot;
    detail::VirtualSchedulerTls::client_node() = client_node;
}

inline void VirtualScheduler::detach() {
    std::lock_guard lock(mu_);
    detail::VirtualSchedulerTls::owner() = nullptr;
    --live_;
    if (!failed_ && live_ > 0 && blocked_ == live_) advance();
}

inline bool VirtualScheduler::has_context() const {
    return detail::VirtualSchedulerTls::owner() == this;
}

inline unsigned VirtualScheduler::current_slot() const {
    return detail::VirtualSchedulerTls::slot();
}

inline unsigned VirtualScheduler::current_client_node() const {
    return detail::VirtualSchedulerTls::client_node();
}

}  // namespace fieldbench
