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
#include <set>
#include <string>
#include <utility>

#include "fieldbench/backend.hpp"

namespace fieldbench {

/// Object counts over a backend snapshot, plus how many Arrays nothing in
/// any index references any more (the garbage left behind by re-writes).
struct CensusReport {
    std::uint64_t containers = 0;
    std::uint64_t key_values = 0;
    std::uint64_t arrays = 0;
    std::uint64_t unreferenced_arrays = 0;

    bool operator==(const CensusReport&) const = default;
};

/// Counts objects and walks every Key-Value index to find referenced Arrays.
/// The walk is structural, needing no mode flag: an entry value is either
/// "container:array" (layered layout), a bare id naming another Key-Value in
/// the same container (flat indexed layout) or a container (index root), and
/// bookkeeping entries ("__"-prefixed keys) are skipped. Layouts that use no
/// Key-Values at all derive Array ids from keys and so never orphan an
/// Array; their unreferenced count is zero by construction.
inline CensusReport take_census(const StoreSnapshot& snapshot) {
    CensusReport report;
    // (container hex, array hex) pairs some index entry points at.
    std::set<std::pair<std::string, std::string>> referenced;

    auto scan_kv = [&](const std::string& container_hex,
                       const std::map<Bytes, Bytes>& entries, auto&& recurse) -> void {
        for (const auto& [key, value] : entries) {
            if (key.rfind("__", 0) == 0) continue;
            auto sep = value.find(':');
            if (sep != Bytes::npos) {
                referenced.emplace(value.substr(0, sep), value.substr(sep + 1));
                continue;
            }
            // A bare id: another container to walk, or a Key-Value in this
            // one, or directly an Array.
            auto target_container = snapshot.containers.find(value);
            if (target_container != snapshot.containers.end()) {
                for (const auto& [oid, kv_entries] : target_container->second.kvs)
                    recurse(value, kv_entries, recurse);
                continue;
            }
            auto here = snapshot.containers.find(container_hex);
            if (here != snapshot.containers.end()) {
                auto kv = here->second.kvs.find(value);
                if (kv != here->second.kvs.end()) {
                    recurse(container_hex, kv->second, recurse);
                    continue;
                }
            }
            referenced.emplace(container_hex, value);
        }
    };

    for (const auto& [container_hex, container] : snapshot.containers) {
        report.containers += 1;
        report.key_values += container.kvs.size();
        report.arrays += container.arrays.size();
    }
    for (const auto& [container_hex, container] : snapshot.containers)
        for (const auto& [oid, entries] : container.kvs) scan_kv(container_hex, entries, scan_kv);

    if (report.key_values == 0) return report;  // no index: nothing can be orphaned
    for (const auto& [container_hex, container] : snapshot.containers)
        for (const auto& [array_hex, size] : container.arrays)
            if (!referenced.count({container_hex, array_hex})) report.unreferenced_arrays += 1;
    return report;
}

}  // namespace fieldbench
