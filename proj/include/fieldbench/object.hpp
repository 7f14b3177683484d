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

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "fieldbench/errors.hpp"
#include "fieldbench/md5.hpp"

namespace fieldbench {

/// Raw byte payloads and byte-string keys/values.
using Bytes = std::string;

/// Striping policy of an object: none, two targets, or all pool targets.
enum class ObjectClass : std::uint8_t { S1 = 1, S2 = 2, SX = 3 };

inline const char* to_string(ObjectClass oc) {
    switch (oc) {
        case ObjectClass::S1: return "S1";
        case ObjectClass::S2: return "S2";
        case ObjectClass::SX: return "SX";
    }
    return "?";
}

inline ObjectClass object_class_from_string(std::string_view s) {
    if (s == "S1" || s == "s1") return ObjectClass::S1;
    if (s == "S2" || s == "s2") return ObjectClass::S2;
    if (s == "SX" || s == "sx") return ObjectClass::SX;
    throw ConfigError("unknown object class '" + std::string(s) + "' (expected S1, S2 or SX)");
}

/// Number of targets an object of this class stripes across in a pool with
/// `pool_targets` targets.
inline unsigned stripe_count(ObjectClass oc, unsigned pool_targets) {
    switch (oc) {
        case ObjectClass::S1: return 1;
        case ObjectClass::S2: return pool_targets < 2 ? pool_targets : 2;
        case ObjectClass::SX: return pool_targets;
    }
    return 1;
}

/// 128-bit object identifier: 96 user-managed bits plus reserved bits that
/// encode the object class. The encoded form is unique per (user bits, class)
/// pair and decodes back exactly.
class ObjectId {
public:
    ObjectId() = default;

    ObjectId(ObjectClass oc, std::uint32_t user_hi, std::uint64_t user_lo)
        : cls_(oc), user_hi_(user_hi), user_lo_(user_lo) {}

    /// Id with user bits formed from an allocator prefix and a counter.
    static ObjectId make(ObjectClass oc, std::uint32_t prefix, std::uint64_t counter) {
        return ObjectId(oc, prefix, counter);
    }

    /// Id whose 96 user bits are the low 12 bytes of an md5 digest.
    static ObjectId from_digest(ObjectClass oc, const Md5::Digest& d) {
        std::uint32_t hi = 0;
        std::uint64_t lo = 0;
        for (int i = 0; i < 4; ++i) hi = (hi << 8) | d[4 + i];
        for (int i = 0; i < 8; ++i) lo = (lo << 8) | d[8 + i];
        return ObjectId(oc, hi, lo);
    }

    ObjectClass object_class() const { return cls_; }
    std::uint32_t user_hi() const { return user_hi_; }
    std::uint64_t user_lo() const { return user_lo_; }

    /// 128-bit wire form: 4 reserved bytes carrying the class, then the 96
    /// user bits, all big-endian.
    std::array<std::uint8_t, 16> encode() const {
        std::array<std::uint8_t, 16> out{};
        out[3] = static_cast<std::uint8_t>(cls_);
        for (int i = 0; i < 4; ++i) out[4 + i] = static_cast<std::uint8_t>(user_hi_ >> (8 * (3 - i)));
        for (int i = 0; i < 8; ++i) out[8 + i] = static_cast<std::uint8_t>(user_lo_ >> (8 * (7 - i)));
        return out;
    }

    static ObjectId decode(const std::array<std::uint8_t, 16>& b) {
        auto cls = static_cast<ObjectClass>(b[3]);
        if (cls != ObjectClass::S1 && cls != ObjectClass::S2 && cls != ObjectClass::SX)
            throw InvalidArgumentError("object id: bad class byte");
        std::uint32_t hi = 0;
        std::uint64_t lo = 0;
        for (int i = 0; i < 4; ++i) hi = (hi << 8) | b[4 + i];
        for (int i = 0; i < 8; ++i) lo = (lo << 8) | b[8 + i];
        return ObjectId(cls, hi, lo);
    }

    std::string hex() const {
        static const char* k = "0123456789abcdef";
        auto e = encode();
        std::string out;
        out.reserve(32);
        for (auto b : e) {
            out.push_back(k[b >> 4]);
            out.push_back(k[b & 0xf]);
        }
        return out;
    }

    static ObjectId from_hex(std::string_view h) {
        if (h.size() != 32) throw ParseError("object id hex must be 32 chars");
        std::array<std::uint8_t, 16> b{};
        for (int i = 0; i < 16; ++i) {
            auto nib = [&](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                throw ParseError("object id hex: bad character");
            };
            b[i] = static_cast<std::uint8_t>((nib(h[2 * i]) << 4) | nib(h[2 * i + 1]));
        }
        return decode(b);
    }

    friend auto operator<=>(const ObjectId&, const ObjectId&) = default;
    friend bool operator==(const ObjectId&, const ObjectId&) = default;

private:
    ObjectClass cls_ = ObjectClass::S1;
    std::uint32_t user_hi_ = 0;
    std::uint64_t user_lo_ = 0;
};

/// 128-bit container identifier, deterministically derived from input bytes.
class ContainerId {
public:
    ContainerId() = default;
    explicit ContainerId(const std::array<std::uint8_t, 16>& b) : bytes_(b) {}

    /// md5 of the given bytes; equal inputs give equal ids.
    static ContainerId derive(std::string_view input) {
        if (input.empty()) throw InvalidArgumentError("container id derivation: empty input");
        return ContainerId(Md5::digest(input));
    }

    const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }

    std::string hex() const { return Md5::hex(bytes_); }

    static ContainerId from_hex(std::string_view h) {
        if (h.size() != 32) throw ParseError("container id hex must be 32 chars");
        std::array<std::uint8_t, 16> b{};
        for (int i = 0; i < 16; ++i) {
            auto nib = [&](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                throw ParseError("container id hex: bad character");
            };
            b[i] = static_cast<std::uint8_t>((nib(h[2 * i]) << 4) | nib(h[2 * i + 1]));
        }
        return ContainerId(b);
    }

    friend auto operator<=>(const ContainerId&, const ContainerId&) = default;
    friend bool operator==(const ContainerId&, const ContainerId&) = default;

private:
    std::array<std::uint8_t, 16> bytes_{};
};

struct ObjectIdHash {
    std::size_t operator()(const ObjectId& id) const noexcept {
        std::size_t h = std::hash<std::uint64_t>{}(id.user_lo());
        h ^= std::hash<std::uint64_t>{}((std::uint64_t(id.user_hi()) << 8) |
                                        std::uint64_t(id.object_class())) +
             0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        return h;
    }
};

struct ContainerIdHash {
    std::size_t operator()(const ContainerId& id) const noexcept {
        std::uint64_t a = 0, b = 0;
        for (int i = 0; i < 8; ++i) a = (a << 8) | id.bytes()[i];
        for (int i = 8; i < 16; ++i) b = (b << 8) | id.bytes()[i];
        return std::hash<std::uint64_t>{}(a ^ (b * 0x9e3779b97f4a7c15ull));
    }
};

}  // namespace fieldbench
