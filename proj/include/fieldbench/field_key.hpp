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

#include <map>
#include <string>
#include <string_view>

#include "fieldbench/errors.hpp"

namespace fieldbench {

/// One half of a field key: metadata names to values, kept sorted.
using KeyPart = std::map<std::string, std::string>;

/// Identifies one weather field. The most-significant half names the forecast
/// (shared by all of its fields, e.g. class and date); the least-significant
/// half names the field within it (e.g. parameter, level, step). The split is
/// chosen by the caller; the two halves must use disjoint names.
struct FieldKey {
    KeyPart most_significant;
    KeyPart least_significant;

    bool operator==(const FieldKey&) const = default;
};

namespace detail {

/// Key names and values feed the canonical serialization, so they must stay
/// outside its structural alphabet ('=', ',') and contain no NUL (reserved
/// for id-derivation suffixes). Names must be non-empty and must not use the
/// reserved "__" prefix.
inline void validate_key_token(std::string_view token, bool is_name) {
    if (is_name && token.empty()) throw InvalidArgumentError("field key has an empty name");
    if (is_name && token.size() >= 2 && token[0] == '_' && token[1] == '_')
        throw InvalidArgumentError("field key name '" + std::string(token) +
                                   "' uses the reserved '__' prefix");
    for (char c : token) {
        if (c == '=' || c == ',' || c == '\0')
            throw InvalidArgumentError("field key token '" + std::string(token) +
                                       "' contains a reserved character");
    }
}

}  // namespace detail

/// Canonical serialization of one key part: names sorted lexicographically,
/// rendered "k1=v1,k2=v2". Deterministic for equal maps regardless of how
/// they were built.
inline std::string canonical_serialization(const KeyPart& part) {
    std::string out;
    for (const auto& [name, value] : part) {
        detail::validate_key_token(name, true);
        detail::validate_key_token(value, false);
        if (!out.empty()) out += ',';
        out += name;
        out += '=';
        out += value;
    }
    return out;
}

/// Canonical serialization of the whole key: both halves merged into one
/// sorted rendering. The halves must not share a name — a shared name would
/// let two distinct keys collapse to one serialization.
inline std::string canonical_full_serialization(const FieldKey& key) {
    KeyPart merged = key.most_significant;
    for (const auto& [name, value] : key.least_significant) {
        if (!merged.emplace(name, value).second)
            throw InvalidArgumentError("field key name '" + name +
                                       "' appears in both halves of the key");
    }
    return canonical_serialization(merged);
}

}  // namespace fieldbench
