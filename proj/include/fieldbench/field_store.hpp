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
#include <utility>

#include "fieldbench/backend.hpp"
#include "fieldbench/field_key.hpp"
#include "fieldbench/md5.hpp"
#include "fieldbench/object.hpp"

namespace fieldbench {

/// How much of the container/index machinery the store uses.
///   Full         — per-forecast index and store containers plus index
///                  Key-Values (the complete layered layout).
///   NoContainers — same Key-Value indexing, but every object lives in the
///                  main container.
///   NoIndex      — no Key-Values at all; Array ids derived from the key.
enum class FieldStoreMode { Full, NoContainers, NoIndex };

inline const char* to_string(FieldStoreMode mode) {
    switch (mode) {
        case FieldStoreMode::Full: return "full";
        case FieldStoreMode::NoContainers: return "no-containers";
        case FieldStoreMode::NoIndex: return "no-index";
    }
    return "?";
}

inline FieldStoreMode field_store_mode_from_string(std::string_view text) {
    if (text == "full") return FieldStoreMode::Full;
    if (text == "no-containers" || text == "nocontainers") return FieldStoreMode::NoContainers;
    if (text == "no-index" || text == "noindex") return FieldStoreMode::NoIndex;
    throw ConfigError("unknown field store mode '" + std::string(text) + "'");
}

struct FieldStoreConfig {
    FieldStoreMode mode = FieldStoreMode::Full;
    ObjectClass kv_object_class = ObjectClass::SX;
    ObjectClass array_object_class = ObjectClass::S1;
    /// Distinguishes the Array ids this store allocates from every other
    /// store writing to the same pool. Values below 16 are reserved for
    /// well-known objects.
    std::uint32_t id_prefix = 16;
};

/// Key under which a forecast index Key-Value records its sibling store
/// container; disjoint from every field entry (those always contain '=').
inline constexpr std::string_view kStoreContainerEntry = "__store_container";
/// Marker entry put into the main Key-Value when the store is opened, so the
/// object exists even before the first field is written.
inline constexpr std::string_view kMainIndexInitEntry = "__init";

/// Weather-field store over an object backend.
///
/// Layout (Full mode): a main container holds the main Key-Value, which maps
/// each forecast's most-significant serialization to that forecast's index
/// container. The index container holds the forecast index Key-Value, which
/// maps each least-significant serialization to "store-container:array-id"
/// and records the store container itself under kStoreContainerEntry. Field
/// payloads live in Arrays inside the store container.
///
/// A store instance serves one worker; any number of instances may target the
/// same pool concurrently. Writes use fresh Arrays and last-writer-wins index
/// updates, so concurrent readers always observe some complete payload.
class FieldStore {
  public:
    /// Opens (creating on first use) the main container and, in indexed
    /// modes, the main Key-Value.
    static FieldStore open(std::shared_ptr<Backend> backend, FieldStoreConfig config) {
        if (!backend) throw InvalidArgumentError("field store needs a backend");
        if (config.id_prefix < 16)
            throw ConfigError("field store id prefix below 16 (reserved range)");
        FieldStore store(std::move(backend), config);
        store.main_container_ = store.open_or_create_container(main_container_id());
        if (config.mode != FieldStoreMode::NoIndex)
            store.backend_->kv_put(store.main_container_, store.main_index_id(),
                                   Bytes(kMainIndexInitEntry), "1");
        return store;
    }

    FieldStoreMode mode() const { return config_.mode; }

    /// Id of the one container every store on a pool shares.
    static ContainerId main_container_id() { return ContainerId::derive("main-container"); }

    /// Id of the main Key-Value inside the main container.
    static ObjectId main_index_id(ObjectClass kv_class) {
        return ObjectId::from_digest(kv_class, Md5::digest("main-index"));
    }

    static ContainerId forecast_index_container_id(std::string_view ms_serial) {
        return ContainerId::derive(Bytes(ms_serial));
    }

    static ContainerId forecast_store_container_id(std::string_view ms_serial) {
        Bytes input(ms_serial);
        input += '\0';
        input += "store";
        return ContainerId::derive(input);
    }

    /// Id of a forecast's index Key-Value. Derived from the forecast name so
    /// every process resolves the same object without coordination.
    static ObjectId forecast_index_kv_id(ObjectClass kv_class, std::string_view ms_serial) {
        Md5 md5;
        md5.update(ms_serial);
        md5.update(std::string_view("\0index-kv", 9));
        return ObjectId::from_digest(kv_class, md5.finish());
    }

    /// Id of a field's Array in NoIndex mode: derived from the whole key, so
    /// re-writes land on the same object.
    static ObjectId no_index_array_id(ObjectClass array_class, std::string_view full_serial) {
        return ObjectId::from_digest(array_class, Md5::digest(full_serial));
    }

    /// In-progress staged write: index traversal done, Array created, data
    /// and index update still pending.
    class WriteOp {
      public:
        std::uint64_t size() const { return size_; }

      private:
        friend class FieldStore;
        ArrayHandle array_;
        std::uint64_t size_ = 0;
        bool update_index_ = false;
        ContainerHandle index_container_;  // container holding the index KV
        ObjectId index_kv_{};
        Bytes index_entry_;
        Bytes index_value_;
    };

    /// In-progress staged read: index resolved, Array open.
    class ReadOp {
      public:
        std::uint64_t size() const { return size_; }

      private:
        friend class FieldStore;
        ArrayHandle array_;
        std::uint64_t size_ = 0;
    };

    /// Stage 1 of a write: traverse/create the index path and create the
    /// field's Array (a fresh one in indexed modes — re-writes never touch
    /// the old Array).
    WriteOp begin_write(const FieldKey& key, std::uint64_t size) {
        if (size == 0) throw InvalidArgumentError("field payload must be non-empty");
        WriteOp op;
        op.size_ = size;
        if (config_.mode == FieldStoreMode::NoIndex) {
            op.array_ = open_or_create_array(
                main_container_,
                no_index_array_id(config_.array_object_class, serialize_full(key)));
            return op;
        }

        const auto [ms, ls] = serialize_indexed(key);
        Forecast forecast = resolve_forecast_for_write(ms);
        ObjectId array_id =
            ObjectId::make(config_.array_object_class, config_.id_prefix, next_array_seq_++);
        op.array_ = backend_->array_create(forecast.store, array_id);
        op.update_index_ = true;
        op.index_container_ = forecast.index;
        op.index_kv_ = forecast.index_kv;
        op.index_entry_ = ls;
        if (config_.mode == FieldStoreMode::Full) {
            op.index_value_ = forecast.store.id().hex();
            op.index_value_ += ':';
            op.index_value_ += array_id.hex();
        } else {
            op.index_value_ = array_id.hex();
        }
        return op;
    }

    /// Stage 2: transfer the payload into the Array.
    void transfer_write(WriteOp& op, std::string_view data) {
        if (data.size() != op.size_)
            throw InvalidArgumentError("write transfer size does not match the staged size");
        backend_->array_write(op.array_, 0, data);
    }

    /// Stage 3: point the index at the new Array (after the data is in
    /// place, so concurrent readers never resolve to a half-written field),
    /// then close it.
    void finish_write(WriteOp&& op) {
        if (op.update_index_)
            backend_->kv_put(op.index_container_, op.index_kv_, op.index_entry_,
                             op.index_value_);
        backend_->close_array(op.array_);
    }

    /// Stage 1 of a read: resolve the key through the index layers and open
    /// the Array. Each lookup layer fails distinctly.
    ReadOp begin_read(const FieldKey& key) {
        ReadOp op;
        if (config_.mode == FieldStoreMode::NoIndex) {
            const Bytes full = serialize_full(key);
            try {
                op.array_ = backend_->array_open(
                    main_container_,
                    no_index_array_id(config_.array_object_class, full));
            } catch (const NotFoundError&) {
                throw NotFoundError("field array missing for key '" + full + "'");
            }
            op.size_ = backend_->array_size(op.array_);
            return op;
        }

        const auto [ms, ls] = serialize_indexed(key);
        auto main_entry = backend_->kv_get(main_container_, main_index_id(), ms);
        if (!main_entry)
            throw NotFoundError("main index has no entry for forecast '" + ms + "'");

        ContainerHandle index_container;
        ContainerHandle store_container;
        ObjectId index_kv{};
        if (config_.mode == FieldStoreMode::Full) {
            index_container = cached_container(ContainerId::from_hex(*main_entry));
            index_kv = forecast_index_kv_id(config_.kv_object_class, ms);
        } else {
            index_container = main_container_;
            index_kv = ObjectId::from_hex(*main_entry);
        }

        auto field_entry = backend_->kv_get(index_container, index_kv, ls);
        if (!field_entry)
            throw NotFoundError("forecast index has no entry for field '" + ls + "'");

        ObjectId array_id{};
        if (config_.mode == FieldStoreMode::Full) {
            auto sep = field_entry->find(':');
            if (sep == Bytes::npos)
                throw Error(Errc::internal, "malformed forecast index entry '" + *field_entry +
                                                "'");
            store_container = cached_container(ContainerId::from_hex(field_entry->substr(0, sep)));
            array_id = ObjectId::from_hex(field_entry->substr(sep + 1));
        } else {
            store_container = main_container_;
            array_id = ObjectId::from_hex(*field_entry);
        }

        try {
            op.array_ = backend_->array_open(store_container, array_id);
        } catch (const NotFoundError&) {
            throw NotFoundError("field array " + array_id.hex() + " missing for field '" + ls +
                                "'");
        }
        op.size_ = backend_->array_size(op.array_);
        return op;
    }

    /// Stage 2: transfer the whole payload out of the Array.
    Bytes transfer_read(ReadOp& op) {
        return backend_->array_read(op.array_, 0, op.size_);
    }

    /// Stage 3: close the Array.
    void finish_read(ReadOp&& op) { backend_->close_array(op.array_); }

    /// Complete field write: index traversal, fresh Array, payload, index
    /// update.
    void write(const FieldKey& key, std::string_view data) {
        WriteOp op = begin_write(key, data.size());
        transfer_write(op, data);
        finish_write(std::move(op));
    }

    /// Complete field read of the most recently indexed payload.
    Bytes read(const FieldKey& key) {
        ReadOp op = begin_read(key);
        Bytes data = transfer_read(op);
        finish_read(std::move(op));
        return data;
    }

    /// Containers this store has opened so far (main plus cached forecast
    /// containers).
    std::size_t cached_container_count() const { return 1 + container_cache_.size(); }

    Backend& backend() { return *backend_; }

  private:
    FieldStore(std::shared_ptr<Backend> backend, FieldStoreConfig config)
        : backend_(std::move(backend)), config_(config) {}

    ObjectId main_index_id() const { return main_index_id(config_.kv_object_class); }

    /// Both index layers resolved for one forecast.
    struct Forecast {
        ContainerHandle index;
        ContainerHandle store;
        ObjectId index_kv{};
    };

    static Bytes serialize_full(const FieldKey& key) {
        Bytes full = canonical_full_serialization(key);
        if (full.empty()) throw InvalidArgumentError("field key is empty");
        return full;
    }

    std::pair<Bytes, Bytes> serialize_indexed(const FieldKey& key) const {
        Bytes ms = canonical_serialization(key.most_significant);
        Bytes ls = canonical_serialization(key.least_significant);
        if (ms.empty() || ls.empty())
            throw InvalidArgumentError(
                "indexed modes need both key halves non-empty (got ms='" + ms + "', ls='" + ls +
                "')");
        return {std::move(ms), std::move(ls)};
    }

    ContainerHandle open_or_create_container(const ContainerId& id) {
        try {
            return backend_->create_container(id);
        } catch (const AlreadyExistsError&) {
            return backend_->open_container(id);
        }
    }

    ArrayHandle open_or_create_array(const ContainerHandle& container, const ObjectId& id) {
        try {
            return backend_->array_open(container, id);
        } catch (const NotFoundError&) {
        }
        try {
            return backend_->array_create(container, id);
        } catch (const AlreadyExistsError&) {
            return backend_->array_open(container, id);  // lost a creation race
        }
    }

    ContainerHandle cached_container(const ContainerId& id) {
        auto it = container_cache_.find(id);
        if (it != container_cache_.end()) return it->second;
        auto handle = backend_->open_container(id);
        container_cache_.emplace(id, handle);
        return handle;
    }

    ContainerHandle cached_open_or_create(const ContainerId& id) {
        auto it = container_cache_.find(id);
        if (it != container_cache_.end()) return it->second;
        auto handle = open_or_create_container(id);
        container_cache_.emplace(id, handle);
        return handle;
    }

    /// Walks the main index for a write, creating the forecast's containers
    /// and entries on first touch. Creation order — containers, then the
    /// store-container entry, then the main-index entry — keeps every
    /// published forecast fully resolvable, even under creation races.
    Forecast resolve_forecast_for_write(const Bytes& ms) {
        Forecast forecast;
        if (config_.mode == FieldStoreMode::NoContainers) {
            forecast.index = main_container_;
            forecast.store = main_container_;
            forecast.index_kv = forecast_index_kv_id(config_.kv_object_class, ms);
            if (!backend_->kv_get(main_container_, main_index_id(), ms))
                backend_->kv_put(main_container_, main_index_id(), ms, forecast.index_kv.hex());
            return forecast;
        }

        forecast.index_kv = forecast_index_kv_id(config_.kv_object_class, ms);
        auto main_entry = backend_->kv_get(main_container_, main_index_id(), ms);
        if (main_entry) {
            forecast.index = cached_container(ContainerId::from_hex(*main_entry));
            auto store_entry =
                backend_->kv_get(forecast.index, forecast.index_kv, Bytes(kStoreContainerEntry));
            if (!store_entry)
                throw Error(Errc::internal,
                            "forecast index for '" + ms + "' lacks its store-container entry");
            forecast.store = cached_container(ContainerId::from_hex(*store_entry));
            return forecast;
        }

        forecast.index = cached_open_or_create(forecast_index_container_id(ms));
        forecast.store = cached_open_or_create(forecast_store_container_id(ms));
        backend_->kv_put(forecast.index, forecast.index_kv, Bytes(kStoreContainerEntry),
                         forecast.store.id().hex());
        backend_->kv_put(main_container_, main_index_id(), ms, forecast.index.id().hex());
        return forecast;
    }

    std::shared_ptr<Backend> backend_;
    FieldStoreConfig config_;
    ContainerHandle main_container_;
    std::map<ContainerId, ContainerHandle> container_cache_;
    std::uint64_t next_array_seq_ = 0;
};

}  // namespace fieldbench
