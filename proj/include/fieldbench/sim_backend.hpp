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

#include <memory>
#include <string_view>

#include "fieldbench/backend.hpp"
#include "fieldbench/memory_backend.hpp"
#include "fieldbench/storage_core.hpp"
#include "fieldbench/virtual_scheduler.hpp"

namespace fieldbench {

/// Simulated distributed backend: the exact in-memory object model behind a
/// virtual-time cost model (per-op latency plus fluid bandwidth sharing over
/// engines, targets and interfaces). Read results are identical to the
/// in-memory backend's; only reported timing differs.
///
/// Worker threads attached to the scheduler are charged virtual time per
/// operation; unattached callers (setup code, tests, census) execute
/// immediately without advancing the clock.
class SimBackend final : public Backend {
public:
    explicit SimBackend(const SimTopology& topo, unsigned client_node_count = 1,
                        std::shared_ptr<PayloadArena> arena = nullptr)
        : core_(arena ? std::move(arena) : make_arena(ArenaKind::Heap)),
          sched_(topo, client_node_count),
          pool_{detail::next_pool_id(), topo.target_count()} {}

    VirtualScheduler& scheduler() { return sched_; }
    const VirtualScheduler& scheduler() const { return sched_; }

    PoolHandle pool() const override { return pool_; }

    ContainerHandle create_container(const ContainerId& id) override {
        std::shared_ptr<detail::ContainerState> state;
        sched_.op_latency([&] { state = core_.create_container(id); });
        return detail::HandleAccess::make_container(id, std::move(state));
    }

    ContainerHandle open_container(const ContainerId& id) override {
        std::shared_ptr<detail::ContainerState> state;
        sched_.op_latency([&] { state = core_.open_container(id); });
        return detail::HandleAccess::make_container(id, std::move(state));
    }

    void close_container(ContainerHandle& c) override {
        sched_.op_latency(nullptr);
        c.close();
    }

    void kv_put(const ContainerHandle& c, const ObjectId& object, std::string_view key,
                std::string_view value) override {
        auto& state = container_state(c, "kv_put");
        sched_.op_latency(
            [&state, &object, key = Bytes(key), value = Bytes(value)] {
                state.kv_get_or_create(object)->put(key, value);
            });
    }

    std::optional<Bytes> kv_get(const ContainerHandle& c, const ObjectId& object,
                                std::string_view key) override {
        auto& state = container_state(c, "kv_get");
        std::optional<Bytes> out;
        sched_.op_latency([&state, &object, key = Bytes(key), &out] {
            if (auto kv = state.kv_find(object)) out = kv->get(key);
        });
        return out;
    }

    ArrayHandle array_create(const ContainerHandle& c, const ObjectId& object) override {
        auto& state = container_state(c, "array_create");
        std::shared_ptr<detail::ArrayState> arr;
        sched_.op_latency([&] { arr = state.array_create(object); });
        return detail::HandleAccess::make_array(object, std::move(arr));
    }

    ArrayHandle array_open(const ContainerHandle& c, const ObjectId& object) override {
        auto& state = container_state(c, "array_open");
        std::shared_ptr<detail::ArrayState> arr;
        sched_.op_latency([&] { arr = state.array_open(object); });
        return detail::HandleAccess::make_array(object, std::move(arr));
    }

    void close_array(ArrayHandle& a) override {
        sched_.op_latency(nullptr);
        a.close();
    }

    void array_write(const ArrayHandle& a, std::uint64_t offset, std::string_view data) override {
        auto& state = array_state(a, "array_write");
        sched_.op_transfer(FlowDirection::Write, data.size(), a.id(),
                           [this, &state, offset, data = Bytes(data)] {
                               state.write(core_.arena(), offset, data);
                           });
    }

    Bytes array_read(const ArrayHandle& a, std::uint64_t offset, std::uint64_t length) override {
        auto& state = array_state(a, "array_read");
        Bytes out;
        sched_.op_transfer(FlowDirection::Read, length, a.id(), [this, &state, offset, length, &out] {
            out = state.read(core_.arena(), offset, length);
        });
        return out;
    }

    std::uint64_t array_size(const ArrayHandle& a) override {
        auto& state = array_state(a, "array_size");
        std::uint64_t size = 0;
        sched_.op_latency([&state, &size] { size = state.size(); });
        return size;
    }

    StoreSnapshot snapshot() override { return core_.snapshot(); }

    bool is_simulated() const override { return true; }

private:
    detail::ContainerState& container_state(const ContainerHandle& h, const char* op) const {
        if (!h.is_open())
            throw ClosedHandleError(std::string(op) + " on closed container " + h.id().hex());
        return *std::static_pointer_cast<detail::ContainerState>(detail::HandleAccess::state(h));
    }

    detail::ArrayState& array_state(const ArrayHandle& h, const char* op) const {
        if (!h.is_open())
            throw ClosedHandleError(std::string(op) + " on closed array " + h.id().hex());
        return *std::static_pointer_cast<detail::ArrayState>(detail::HandleAccess::state(h));
    }

    detail::StorageCore core_;
    VirtualScheduler sched_;
    PoolHandle pool_;
};

/// The storage backends a run can target.
enum class BackendKind { Memory, Sim };

inline BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "memory" || s == "mem") return BackendKind::Memory;
    if (s == "sim" || s == "simulated") return BackendKind::Sim;
    throw ConfigError("unknown backend '" + std::string(s) + "' (expected memory or sim)");
}

inline const char* to_string(BackendKind k) {
    return k == BackendKind::Memory ? "memory" : "sim";
}

/// Create a pool over a fresh backend of the given kind.
inline std::shared_ptr<Backend> create_pool(BackendKind kind, const SimTopology& topo,
                                            unsigned client_node_count = 1,
                                            std::shared_ptr<PayloadArena> arena = nullptr) {
    if (kind == BackendKind::Sim)
        return std::make_shared<SimBackend>(topo, client_node_count, std::move(arena));
    return std::make_shared<MemoryBackend>(topo, std::move(arena));
}

}  // namespace fieldbench
