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

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string_view>
#include <vector>

#include "fieldbench/backend.hpp"
#include "fieldbench/object.hpp"
#include "fieldbench/payload_arena.hpp"

namespace fieldbench::detail {

/// One Key-Value object: byte-string keys to byte-string values, atomic per
/// operation.
class KvState {
public:
    void put(std::string_view key, std::string_view value) {
        std::lock_guard lock(mu_);
        entries_[Bytes(key)] = Bytes(value);
    }

    std::optional<Bytes> get(std::string_view key) const {
        std::lock_guard lock(mu_);
        auto it = entries_.find(Bytes(key));
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    std::map<Bytes, Bytes> copy_entries() const {
        std::lock_guard lock(mu_);
        return entries_;
    }

private:
    mutable std::mutex mu_;
    std::map<Bytes, Bytes> entries_;
};

/// One Array object: a sparse extent map over arena blobs. Unwritten gaps
/// inside the length read as zero bytes. Writes never mutate stored blobs, so
/// a read assembled from a locked snapshot of the extent map is always a
/// consistent point-in-time view, never a mixture of old and new bytes.
class ArrayState {
public:
    explicit ArrayState(ObjectClass cls) : cls_(cls) {}

    ObjectClass object_class() const { return cls_; }

    void write(PayloadArena& arena, std::uint64_t offset, std::string_view data) {
        if (data.empty()) return;  // length unchanged by an empty write
        std::uint64_t token = arena.store(data);
        std::uint64_t end = offset + data.size();
        std::lock_guard lock(mu_);
        carve(offset, end);
        extents_.emplace(offset, Extent{end - offset, token, 0});
        if (end > length_) length_ = end;
    }

    Bytes read(const PayloadArena& arena, std::uint64_t offset, std::uint64_t length) const {
        struct Piece {
            std::uint64_t at;        // offset within the result
            std::uint64_t token;
            std::uint64_t blob_off;
            std::uint64_t len;
        };
        std::vector<Piece> pieces;
        {
            std::lock_guard lock(mu_);
            if (offset + length > length_)
                throw OutOfBoundsError("array read past length");
            if (length == 0) return Bytes();
            std::uint64_t end = offset + length;
            auto it = extents_.upper_bound(offset);
            if (it != extents_.begin()) {
                auto prev = std::prev(it);
                if (prev->first + prev->second.len > offset) it = prev;
            }
            for (; it != extents_.end() && it->first < end; ++it) {
                std::uint64_t s = it->first < offset ? offset : it->first;
                std::uint64_t e = it->first + it->second.len;
                if (e > end) e = end;
                pieces.push_back(Piece{s - offset, it->second.token,
                                       it->second.blob_off + (s - it->first), e - s});
            }
        }
        // Blobs are immutable; assemble outside the lock. Gaps stay zero.
        Bytes out(length, '\0');
        for (const auto& p : pieces) arena.load(p.token, p.blob_off, out.data() + p.at, p.len);
        return out;
    }

    std::uint64_t size() const {
        std::lock_guard lock(mu_);
        return length_;
    }

private:
    struct Extent {
        std::uint64_t len;
        std::uint64_t token;
        std::uint64_t blob_off;  // where this extent starts within its blob
    };

    /// Removes or trims extents overlapping [start, end); caller holds mu_.
    void carve(std::uint64_t start, std::uint64_t end) {
        // An extent at exactly `start` belongs to the erase loop below;
        // lower_bound keeps it out of the left-neighbor trim, so no
        // zero-length fragment can block the caller's emplace at `start`.
        auto it = extents_.lower_bound(start);
        if (it != extents_.begin()) {
            auto prev = std::prev(it);
            std::uint64_t pend = prev->first + prev->second.len;
            if (pend > start) {
                // Keep the left part; re-insert a right remainder if any.
                Extent tail = prev->second;
                prev->second.len = start - prev->first;
                if (pend > end) {
                    tail.blob_off += end - prev->first;
                    tail.len = pend - end;
                    extents_.emplace(end, tail);
                }
            }
        }
        while (it != extents_.end() && it->first < end) {
            std::uint64_t eend = it->first + it->second.len;
            if (eend <= end) {
                it = extents_.erase(it);
            } else {
                Extent tail = it->second;
                tail.blob_off += end - it->first;
                tail.len = eend - end;
                extents_.emplace(end, tail);
                extents_.erase(it);
                break;
            }
        }
    }

    const ObjectClass cls_;
    mutable std::mutex mu_;
    std::map<std::uint64_t, Extent> extents_;  // start offset → extent
    std::uint64_t length_ = 0;
};

/// One container: a private namespace of KV and Array objects.
class ContainerState {
public:
    std::shared_ptr<KvState> kv_get_or_create(const ObjectId& id) {
        std::lock_guard lock(mu_);
        auto& slot = kvs_[id];
        if (!slot) slot = std::make_shared<KvState>();
        return slot;
    }

    std::shared_ptr<KvState> kv_find(const ObjectId& id) const {
        std::lock_guard lock(mu_);
        auto it = kvs_.find(id);
        return it == kvs_.end() ? nullptr : it->second;
    }

    std::shared_ptr<ArrayState> array_create(const ObjectId& id) {
        std::lock_guard lock(mu_);
        auto [it, inserted] = arrays_.try_emplace(id, nullptr);
        if (!inserted) throw AlreadyExistsError("array exists: " + id.hex());
        it->second = std::make_shared<ArrayState>(id.object_class());
        return it->second;
    }

    std::shared_ptr<ArrayState> array_open(const ObjectId& id) const {
        std::lock_guard lock(mu_);
        auto it = arrays_.find(id);
        if (it == arrays_.end()) throw NotFoundError("array not found: " + id.hex());
        return it->second;
    }

    StoreSnapshot::Container snapshot(const PayloadArena&) const {
        StoreSnapshot::Container out;
        std::lock_guard lock(mu_);
        for (const auto& [id, kv] : kvs_) out.kvs.emplace(id.hex(), kv->copy_entries());
        for (const auto& [id, arr] : arrays_) out.arrays.emplace(id.hex(), arr->size());
        return out;
    }

private:
    mutable std::mutex mu_;
    std::map<ObjectId, std::shared_ptr<KvState>> kvs_;
    std::map<ObjectId, std::shared_ptr<ArrayState>> arrays_;
};

/// The object model shared by both backends: a registry of containers over a
/// payload arena. Timing belongs to the backend wrappers, never here.
class StorageCore {
public:
    explicit StorageCore(std::shared_ptr<PayloadArena> arena) : arena_(std::move(arena)) {}

    std::shared_ptr<ContainerState> create_container(const ContainerId& id) {
        std::unique_lock lock(mu_);
        auto [it, inserted] = containers_.try_emplace(id, nullptr);
        if (!inserted) throw AlreadyExistsError("container exists: " + id.hex());
        it->second = std::make_shared<ContainerState>();
        return it->second;
    }

    std::shared_ptr<ContainerState> open_container(const ContainerId& id) const {
        std::shared_lock lock(mu_);
        auto it = containers_.find(id);
        if (it == containers_.end()) throw NotFoundError("container not found: " + id.hex());
        return it->second;
    }

    PayloadArena& arena() { return *arena_; }
    const PayloadArena& arena() const { return *arena_; }

    StoreSnapshot snapshot() const {
        StoreSnapshot out;
        std::shared_lock lock(mu_);
        for (const auto& [id, c] : containers_) out.containers.emplace(id.hex(), c->snapshot(*arena_));
        return out;
    }

private:
    std::shared_ptr<PayloadArena> arena_;
    mutable std::shared_mutex mu_;
    std::map<ContainerId, std::shared_ptr<ContainerState>> containers_;
};

}  // namespace fieldbench::detail
