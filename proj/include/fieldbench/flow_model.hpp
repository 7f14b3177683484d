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

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "fieldbench/errors.hpp"

namespace fieldbench {

/// Direction of a simulated transfer, as seen from the storage cluster.
enum class FlowDirection { Write, Read };

namespace detail {

/// One resource a flow crosses, with the fraction of the flow's bytes that
/// cross it (1.0 for a client interface, per-stripe-share for a target).
struct FlowLoad {
    unsigned resource;
    double weight;
};

/// Max-min fair bandwidth sharing over capacitated resources (progressive
/// filling): all flows' rates rise together; a flow freezes when any resource
/// it crosses saturates. A flow's consumption of a resource is rate × weight.
///
/// The solution generalises the closed-form isolated-transfer cost: a single
/// flow gets min over its resources of capacity/weight.
class FlowNetwork {
public:
    explicit FlowNetwork(std::vector<long double> capacities)
        : caps_(std::move(capacities)) {}

    std::size_t resource_count() const { return caps_.size(); }

    /// Rates (bytes/second) for the given flows, in input order.
    std::vector<long double> allocate(
        const std::vector<const std::vector<FlowLoad>*>& flows) const {
        constexpr long double kInf = std::numeric_limits<long double>::infinity();
        std::vector<long double> rate(flows.size(), 0.0L);
        std::vector<long double> residual = caps_;
        std::vector<long double> load(caps_.size(), 0.0L);
        std::vector<char> frozen(flows.size(), 0);
        std::vector<char> saturated(caps_.size(), 0);

        for (const auto* f : flows)
            for (const auto& l : *f) load[l.resource] += l.weight;

        std::size_t active = flows.size();
        while (active > 0) {
            long double step = kInf;
            for (std::size_t r = 0; r < caps_.size(); ++r) {
                if (saturated[r] || load[r] <= 0.0L) continue;
                long double room = residual[r] > 0.0L ? residual[r] : 0.0L;
                long double d = room / load[r];
                if (d < step) step = d;
            }
            if (step == kInf)
                throw Error(Errc::internal, "flow allocation: unconstrained flow");

            for (std::size_t f = 0; f < flows.size(); ++f)
                if (!frozen[f]) rate[f] += step;
            for (std::size_t r = 0; r < caps_.size(); ++r)
                if (!saturated[r] && load[r] > 0.0L) residual[r] -= step * load[r];

            // Saturate exhausted resources and freeze the flows crossing them.
            for (std::size_t r = 0; r < caps_.size(); ++r)
                if (!saturated[r] && load[r] > 0.0L && residual[r] <= caps_[r] * 1e-12L)
                    saturated[r] = 1;
            for (std::size_t f = 0; f < flows.size(); ++f) {
                if (frozen[f]) continue;
                bool hit = false;
                for (const auto& l : *flows[f])
                    if (saturated[l.resource]) {
                        hit = true;
                        break;
                    }
                if (!hit) continue;
                frozen[f] = 1;
                --active;
                for (const auto& l : *flows[f]) load[l.resource] -= l.weight;
            }
        }
        return rate;
    }

private:
    std::vector<long double> caps_;
};

}  // namespace detail
}  // namespace fieldbench
