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
#include <cstring>
#include <string_view>

#include "fieldbench/errors.hpp"
#include "fieldbench/object.hpp"

namespace fieldbench::payload {

/// Who wrote a payload and which write it was. Embedded in the payload
/// itself, so integrity checks need no stored copies of the data.
struct Tag {
    std::uint32_t client_node = 0;
    std::uint32_t process = 0;
    std::uint32_t iteration = 0;
    std::uint64_t sequence = 0;  // write sequence number; re-writes increment it
    std::uint64_t size = 0;

    bool operator==(const Tag&) const = default;
};

inline constexpr std::uint64_t kMagic = 0x46424c5041594c44ull;  // "FBLPAYLD"
inline constexpr std::uint64_t kHeaderBytes = 48;

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t run_seed, const Tag& tag) {
    std::uint64_t s = mix64(run_seed);
    s = mix64(s ^ ((static_cast<std::uint64_t>(tag.client_node) << 32) | tag.process));
    s = mix64(s ^ tag.iteration);
    s = mix64(s ^ tag.sequence);
    return s;
}

inline void put_u64(char* at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) at[i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

inline std::uint64_t get_u64(const char* at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(at[i])) << (8 * i);
    return v;
}

}  // namespace detail

/// Builds a payload of `size` bytes: a 48-byte header carrying the tag,
/// followed by a pseudo-random byte stream fully determined by the run seed
/// and the tag. Any slice of any other payload differs from it.
inline Bytes make(std::uint64_t run_seed, const Tag& tag_in) {
    if (tag_in.size < kHeaderBytes)
        throw InvalidArgumentError("payload size below the " + std::to_string(kHeaderBytes) +
                                   "-byte header");
    Tag tag = tag_in;
    Bytes out(tag.size, '\0');
    detail::put_u64(out.data(), kMagic);
    detail::put_u64(out.data() + 8,
                    (static_cast<std::uint64_t>(tag.client_node) << 32) | tag.process);
    detail::put_u64(out.data() + 16, tag.iteration);
    detail::put_u64(out.data() + 24, tag.sequence);
    detail::put_u64(out.data() + 32, tag.size);
    detail::put_u64(out.data() + 40, detail::stream_seed(run_seed, tag));

    std::uint64_t state = detail::stream_seed(run_seed, tag);
    std::uint64_t at = kHeaderBytes;
    while (at < tag.size) {
        std::uint64_t word = detail::mix64(state++);
        std::uint64_t n = tag.size - at < 8 ? tag.size - at : 8;
        for (std::uint64_t i = 0; i < n; ++i)
            out[at + i] = static_cast<char>((word >> (8 * i)) & 0xff);
        at += n;
    }
    return out;
}

/// Parses and fully verifies a payload: header fields, advertised size, and
/// every body byte against the regenerated stream. Throws RunError naming
/// the first inconsistency; a torn or mixed payload cannot pass.
inline Tag verify(std::uint64_t run_seed, std::string_view data) {
    if (data.size() < kHeaderBytes) throw RunError("payload shorter than its header");
    if (detail::get_u64(data.data()) != kMagic) throw RunError("payload magic mismatch");
    Tag tag;
    std::uint64_t who = detail::get_u64(data.data() + 8);
    tag.client_node = static_cast<std::uint32_t>(who >> 32);
    tag.process = static_cast<std::uint32_t>(who & 0xffffffffull);
    tag.iteration = static_cast<std::uint32_t>(detail::get_u64(data.data() + 16));
    tag.sequence = detail::get_u64(data.data() + 24);
    tag.size = detail::get_u64(data.data() + 32);
    if (tag.size != data.size())
        throw RunError("payload advertises " + std::to_string(tag.size) + " bytes but has " +
                       std::to_string(data.size()));
    std::uint64_t seed = detail::stream_seed(run_seed, tag);
    if (detail::get_u64(data.data() + 40) != seed)
        throw RunError("payload stream seed mismatch (wrong run seed or torn header)");

    std::uint64_t state = seed;
    std::uint64_t at = kHeaderBytes;
    while (at < tag.size) {
        std::uint64_t word = detail::mix64(state++);
        std::uint64_t n = tag.size - at < 8 ? tag.size - at : 8;
        for (std::uint64_t i = 0; i < n; ++i) {
            if (data[at + i] != static_cast<char>((word >> (8 * i)) & 0xff))
                throw RunError("payload body corrupt at byte " + std::to_string(at + i));
        }
        at += n;
    }
    return tag;
}

}  // namespace fieldbench::payload
