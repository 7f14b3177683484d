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

#include <atomic>
#include <cerrno>
#include <cstring>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <unistd.h>

#include "fieldbench/errors.hpp"

namespace fieldbench {

/// Write-once blob store backing Array payload bytes. Each stored blob is
/// immutable and addressed by an opaque token; Array extents reference
/// (token, offset, length) slices of blobs.
///
/// Implementations must allow concurrent store() and load() from many
/// threads.
class PayloadArena {
public:
    virtual ~PayloadArena() = default;

    /// Store a copy of `data`, returning a token for later loads.
    virtual std::uint64_t store(std::string_view data) = 0;

    /// Copy `len` bytes starting `offset` bytes into the blob `token` refers
    /// to. The caller is responsible for staying within the stored length.
    virtual void load(std::uint64_t token, std::uint64_t offset, char* out,
                      std::uint64_t len) const = 0;
};

/// Arena keeping every blob in process memory.
class HeapArena final : public PayloadArena {
public:
    std::uint64_t store(std::string_view data) override {
        std::lock_guard lock(mu_);
        blobs_.emplace_back(data);
        return blobs_.size() - 1;
    }

    void load(std::uint64_t token, std::uint64_t offset, char* out,
              std::uint64_t len) const override {
        const std::string* blob = nullptr;
        {
            std::lock_guard lock(mu_);
            if (token >= blobs_.size()) throw Error(Errc::internal, "arena: bad blob token");
            blob = &blobs_[token];
        }
        // Blobs are immutable once stored and deque elements stay put, so the
        // copy can happen outside the lock.
        if (offset + len > blob->size()) throw Error(Errc::internal, "arena: blob over-read");
        std::memcpy(out, blob->data() + offset, len);
    }

private:
    mutable std::mutex mu_;
    std::deque<std::string> blobs_;
};

/// Arena spilling blobs to an unlinked temporary file, for data sets larger
/// than memory. Tokens are byte offsets into the file; pread/pwrite make
/// concurrent access safe without locking.
class FileArena final : public PayloadArena {
public:
    FileArena() {
        std::string path =
            (std::filesystem::temp_directory_path() / "fieldbench-arena-XXXXXX").string();
        fd_ = ::mkstemp(path.data());
        if (fd_ < 0)
            throw RunError(std::string("payload arena: mkstemp failed:") + std::strerror(errno));
        ::unlink(path.c_str());
    }

    ~FileArena() override {
        if (fd_ >= 0) ::close(fd_);
    }

    FileArena(const FileArena&) = delete;
    FileArena& operator=(const FileArena&) = delete;

    std::uint64_t store(std::string_view data) override {
        std::uint64_t off = next_.fetch_add(data.size(), std::memory_order_relaxed);
        const char* p = data.data();
        std::uint64_t left = data.size();
        std::uint64_t at = off;
        while (left > 0) {
            ssize_t n = ::pwrite(fd_, p, left, static_cast<off_t>(at));
            if (n < 0) {
                if (errno == EINTR) continue;
                throw RunError(std::string("payload arena: pwrite failed: ") +
                               std::strerror(errno));
            }
            p += n;
            left -= static_cast<std::uint64_t>(n);
            at += static_cast<std::uint64_t>(n);
        }
        return off;
    }

    void load(std::uint64_t token, std::uint64_t offset, char* out,
              std::uint64_t len) const override {
        char* p = out;
        std::uint64_t left = len;
        std::uint64_t at = token + offset;
        while (left > 0) {
            ssize_t n = ::pread(fd_, p, left, static_cast<off_t>(at));
            if (n < 0) {
                if (errno == EINTR) continue;
                throw RunError(std::string("payload arena: pread failed: ") +
                               std::strerror(errno));
            }
            if (n == 0) throw Error(Errc::internal, "arena: blob over-read");
            p += n;
            left -= static_cast<std::uint64_t>(n);
            at += static_cast<std::uint64_t>(n);
        }
    }

private:
    int fd_ = -1;
    std::atomic<std::uint64_t> next_{0};
};

enum class ArenaKind { Heap, File };

inline ArenaKind arena_kind_from_string(std::string_view s) {
    if (s == "heap") return ArenaKind::Heap;
    if (s == "file") return ArenaKind::File;
    throw ConfigError("unknown payload arena '" + std::string(s) + "' (expected heap or file)");
}

inline std::shared_ptr<PayloadArena> make_arena(ArenaKind kind) {
    if (kind == ArenaKind::File) return std::make_shared<FileArena>();
    return std::make_shared<HeapArena>();
}

}  // namespace fieldbench
