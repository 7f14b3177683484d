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

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "fieldbench/object.hpp"
#include "fieldbench/topology.hpp"

namespace fieldbench {

/// A pool: space reserved across a fixed set of targets, holding containers.
struct PoolHandle {
    std::uint64_t pool_id = 0;
    unsigned target_count = 0;
};

namespace detail {
struct HandleAccess;
}

/// Handle to an open container. Copies share open-state; close() rejects
/// further operations through any copy.
class ContainerHandle {
public:
    ContainerHandle() = default;

    const ContainerId& id() const { return id_; }
    bool is_open() const { return open_ != nullptr && *open_; }
    void close() {
        if (open_) *open_ = false;
    }

private:
    friend struct detail::HandleAccess;
    ContainerId id_;
    std::shared_ptr<void> state_;
    std::shared_ptr<bool> open_;
};

/// Handle to an open Array object.
class ArrayHandle {
public:
    ArrayHandle() = default;

    const ObjectId& id() const { return id_; }
    bool is_open() const { return open_ != nullptr && *open_; }
    void close() {
        if (open_) *open_ = false;
    }

private:
    friend struct detail::HandleAccess;
    ObjectId id_;
    std::shared_ptr<void> state_;
    std::shared_ptr<bool> open_;
};

namespace detail {
/// Backend-internal construction of and access to handle state.
struct HandleAccess {
    static ContainerHandle make_container(const ContainerId& id, std::shared_ptr<void> state) {
        ContainerHandle h;
        h.id_ = id;
        h.state_ = std::move(state);
        h.open_ = std::make_shared<bool>(true);
        return h;
    }
    static ArrayHandle make_array(const ObjectId& id, std::shared_ptr<void> state) {
        ArrayHandle h;
        h.id_ = id;
        h.state_ = std::move(state);
        h.open_ = std::make_shared<bool>(true);
        return h;
    }
    static const std::shared_ptr<void>& state(const ContainerHandle& h) { return h.state_; }
    static const std::shared_ptr<void>& state(const ArrayHandle& h) { return h.state_; }
};
}  // namespace detail

/// Point-in-time inventory of everything a backend stores, keyed by hex ids
/// so ordering is deterministic. Used by the census command and by tests.
struct StoreSnapshot {
    struct Container {
        /// KV object id (hex) → full key/value contents.
        std::map<std::string, std::map<Bytes, Bytes>> kvs;
        /// Array object id (hex) → length in bytes.
        std::map<std::string, std::uint64_t> arrays;
    };
    /// Container id (hex) → contents.
    std::map<std::string, Container> containers;
};

/// Abstract object store: one pool of containers holding Key-Value and Array
/// objects. Implementations must be safe for concurrent use by many workers;
/// kv_put/kv_get are atomic per key; operations on distinct arrays never
/// block one another.
class Backend {
public:
    virtual ~Backend() = default;

    virtual PoolHandle pool() const = 0;

    /// Creates a container; a second creation of the same id fails with
    /// already-exists (concurrent creators: exactly one wins).
    virtual ContainerHandle create_container(const ContainerId& id) = 0;

    /// Opens an existing container; unknown ids fail with not-found.
    virtual ContainerHandle open_container(const ContainerId& id) = 0;

    virtual void close_container(ContainerHandle& c) = 0;

    /// Inserts or atomically replaces the value under `key` in the KV object
    /// `object`, creating the object on first use.
    virtual void kv_put(const ContainerHandle& c, const ObjectId& object, std::string_view key,
                        std::string_view value) = 0;

    /// Returns the stored value, or nothing if the object or key is absent
    /// (not an error: callers branch on it).
    virtual std::optional<Bytes> kv_get(const ContainerHandle& c, const ObjectId& object,
                                        std::string_view key) = 0;

    /// Creates a zero-length Array striped per the id's object class.
    virtual ArrayHandle array_create(const ContainerHandle& c, const ObjectId& object) = 0;

    /// Opens an existing Array; unknown ids fail with not-found.
    virtual ArrayHandle array_open(const ContainerHandle& c, const ObjectId& object) = 0;

    virtual void close_array(ArrayHandle& a) = 0;

    /// Stores bytes at `offset`; array length grows to cover the write.
    virtual void array_write(const ArrayHandle& a, std::uint64_t offset,
                             std::string_view data) = 0;

    /// Returns exactly the bytes previously written; unwritten gaps within
    /// the array length read as zero. Reading past the length is
    /// out-of-bounds.
    virtual Bytes array_read(const ArrayHandle& a, std::uint64_t offset,
                             std::uint64_t length) = 0;

    virtual std::uint64_t array_size(const ArrayHandle& a) = 0;

    virtual StoreSnapshot snapshot() = 0;

    /// True when timestamps for runs against this backend must come from the
    /// simulator's virtual clock rather than wall time.
    virtual bool is_simulated() const = 0;
};

}  // namespace fieldbench
