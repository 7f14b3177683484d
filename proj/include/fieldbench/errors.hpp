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

#include <stdexcept>
#include <string>

namespace fieldbench {

/// Error categories, also used as process exit codes by the CLI.
enum class Errc {
    ok = 0,
    config_invalid = 1,
    run_failure = 2,
    parse_error = 3,
    not_found = 4,
    already_exists = 5,
    closed_handle = 6,
    out_of_bounds = 7,
    invalid_argument = 8,
    internal = 9,
};

inline const char* to_string(Errc e) {
    switch (e) {
        case Errc::ok: return "ok";
        case Errc::config_invalid: return "config-invalid";
        case Errc::run_failure: return "run-failure";
        case Errc::parse_error: return "parse-error";
        case Errc::not_found: return "not-found";
        case Errc::already_exists: return "already-exists";
        case Errc::closed_handle: return "closed-handle";
        case Errc::out_of_bounds: return "out-of-bounds";
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::internal: return "internal";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(Errc::config_invalid, what) {}
};

struct NotFoundError : Error {
    explicit NotFoundError(const std::string& what) : Error(Errc::not_found, what) {}
};

struct AlreadyExistsError : Error {
    explicit AlreadyExistsError(const std::string& what) : Error(Errc::already_exists, what) {}
};

struct ClosedHandleError : Error {
    explicit ClosedHandleError(const std::string& what) : Error(Errc::closed_handle, what) {}
};

struct OutOfBoundsError : Error {
    explicit OutOfBoundsError(const std::string& what) : Error(Errc::out_of_bounds, what) {}
};

struct InvalidArgumentError : Error {
    explicit InvalidArgumentError(const std::string& what) : Error(Errc::invalid_argument, what) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(Errc::parse_error, what) {}
};

struct RunError : Error {
    explicit RunError(const std::string& what) : Error(Errc::run_failure, what) {}
};

}  // namespace fieldbench
