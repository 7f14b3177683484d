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

#include <chrono>
#include <cstdint>

#include "fieldbench/errors.hpp"

namespace fieldbench {

/// Shape and speed of the simulated storage cluster.
///
/// A cluster has `server_node_count` storage nodes, each running
/// `engines_per_node` engines with `targets_per_engine` targets apiece.
/// Transfers are limited per target, per node interface and per stream;
/// every non-transfer operation costs a flat latency.
struct SimTopology {
    unsigned server_node_count = 1;
    unsigned engines_per_node = 2;
    unsigned targets_per_engine = 12;

    /// Sustained write bandwidth of one target, bytes/s.
    std::uint64_t per_target_bandwidth = 250ull << 20;
    /// Sustained read bandwidth of one target, bytes/s; 0 means same as write.
    std::uint64_t per_target_read_bandwidth = 0;

    /// Network interface capacity of one server node, bytes/s, per direction.
    std::uint64_t per_interface_bandwidth = 12ull << 30;
    /// Network interface capacity of one client node, bytes/s, per direction;
    /// 0 means same as the server interface.
    std::uint64_t client_interface_bandwidth = 0;
    /// Interfaces per client node (capacity multiplier on the client side).
    unsigned interfaces_per_client_node = 1;

    /// Fixed cost of any single operation (open, create, put, get, close,
    /// and the latency part of a transfer).
    std::uint64_t per_op_latency_ns = 1'000'000;

    /// Striped objects are laid out in cells of this size, assigned
    /// round-robin across the object's stripe targets.
    std::uint64_t stripe_cell_bytes = 1ull << 20;

    unsigned target_count() const {
        return server_node_count * engines_per_node * targets_per_engine;
    }

    std::uint64_t target_read_bandwidth() const {
        return per_target_read_bandwidth ? per_target_read_bandwidth : per_target_bandwidth;
    }

    std::uint64_t client_interface_capacity() const {
        std::uint64_t per = client_interface_bandwidth ? client_interface_bandwidth
                                                       : per_interface_bandwidth;
        return per * interfaces_per_client_node;
    }

    void validate() const {
        if (server_node_count == 0) throw ConfigError("topology: server_node_count must be > 0");
        if (engines_per_node == 0) throw ConfigError("topology: engines_per_node must be > 0");
        if (targets_per_engine == 0) throw ConfigError("topology: targets_per_engine must be > 0");
        if (per_target_bandwidth == 0) throw ConfigError("topology: per_target_bandwidth must be > 0");
        if (per_interface_bandwidth == 0)
            throw ConfigError("topology: per_interface_bandwidth must be > 0");
        if (interfaces_per_client_node == 0)
            throw ConfigError("topology: interfaces_per_client_node must be > 0");
        if (per_op_latency_ns == 0) throw ConfigError("topology: per_op_latency_ns must be > 0");
        if (stripe_cell_bytes == 0) throw ConfigError("topology: stripe_cell_bytes must be > 0");
    }

    /// Time for one transfer of `size` bytes striped over `stripe` targets
    /// while `concurrent_streams` streams share the interface:
    ///
    ///   latency + size / min(stripe * per_target_bw, interface_bw / streams)
    ///
    /// This is the closed-form cost of an isolated transfer; the scheduler's
    /// flow model generalises it to arbitrary overlap patterns.
    std::chrono::nanoseconds transfer_time(std::uint64_t size, unsigned stripe,
                                           unsigned concurrent_streams = 1) const {
        if (stripe == 0) throw InvalidArgumentError("transfer_time: stripe must be > 0");
        if (concurrent_streams == 0)
            throw InvalidArgumentError("transfer_time: concurrent_streams must be > 0");
        long double bw = static_cast<long double>(stripe) *
                         static_cast<long double>(per_target_bandwidth);
        long double iface = static_cast<long double>(per_interface_bandwidth) /
                            static_cast<long double>(concurrent_streams);
        if (iface < bw) bw = iface;
        long double ns = static_cast<long double>(per_op_latency_ns) +
                         static_cast<long double>(size) * 1e9L / bw;
        return std::chrono::nanoseconds(static_cast<std::int64_t>(ns + 0.5L));
    }
};

}  // namespace fieldbench
