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

#include <atomic>
#include <memory>
#include <string_view>

#include "fieldbench/backend.hpp"
#include "fieldbench/storage_core.hpp"

namespace fieldbench {

namespace detail {
inline std::uint64_t next_pool_id() {
    static std::atomic<std::uint64_t> next{1};
    return next.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Exact reference backend: every operation takes effect immediately in
/// process memory; no timing model. Concurrency-safe per the Backend
/// contract. Serves as the oracle the simulated backend is tested against.
class MemoryBackend final : public Backend {
public:
    explicit MemoryBackend(const SimTopology& shape = {},
                           std::shared_ptr<PayloadArena> arena = nullptr)
        : core_(arena ? std::move(arena) : make_arena(ArenaKind::Heap)),
          pool_{detail::next_pool_id(), (shape.validate(), shape.target_count())} {}

    PoolHandle pool() const override { return pool_; }

    ContainerHandle create_container(const ContainerId& id) override {
        return detail::HandleAccess::make_container(id, core_.create_container(id));
    }

    ContainerHandle open_container(const ContainerId& id) override {
        return detail::HandleAccess::make_container(id, core_.open_container(id));
    }

    void close_container(ContainerHandle& c) override { c.close(); }

    void kv_put(const ContainerHandle& c, const ObjectId& object, std::string_view key,
                std::string_view value) override {
        container_state(c, "kv_put").kv_get_or_create(object)->put(key, value);
    }

    std::optional<Bytes> kv_get(const ContainerHandle& c, const ObjectId& object,
                                std::string_view key) override {
        auto kv = container_state(c, "kv_get").kv_find(object);
        if (!kv) return std::nullopt;
        return kv->get(key);
    }

    ArrayHandle array_create(const ContainerHandle& c, const ObjectId& object) override {
        return detail::HandleAccess::make_array(
            object, container_state(c, "array_create").array_create(object));
    }

    ArrayHandle array_open(const ContainerHandle& c, const ObjectId& object) override {
        return detail::HandleAccess::make_array(
            object, container_state(c, "array_open").array_open(object));
    }

    void close_array(ArrayHandle& a) override { a.close(); }

    void array_write(const ArrayHandle& a, std::uint64_t offset, std::string_view data) override {
        array_state(a, "array_write").write(core_.arena(), offset, data);
    }

    Bytes array_read(const ArrayHandle& a, std::uint64_t offset, std::uint64_t length) override {
        return array_state(a, "array_read").read(core_.arena(), offset, length);
    }

    std::uint64_t array_size(const ArrayHandle& a) override {
        return array_state(a, "array_size").size();
    }

    StoreSnapshot snapshot() override { return core_.snapshot(); }

    bool is_simulated() const override { return false; }

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
    PoolHandle pool_;
};

}  // namespace fieldbench
