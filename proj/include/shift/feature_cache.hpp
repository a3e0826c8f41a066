#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "shift/data.hpp"

namespace shift {

// On-disk content-addressed feature store. One file per (model, chunk) entry,
// named by the hex digest of the key; entries are write-once and carry a
// checksum trailer, so a torn or corrupted file reads as a miss (plus a
// warning), never as wrong data. A default-constructed cache is disabled and
// treats every get as a miss and every put as a no-op.
class FeatureCache {
public:
    FeatureCache() = default;
    explicit FeatureCache(std::filesystem::path dir);

    bool enabled() const { return !dir_.empty(); }
    const std::filesystem::path& dir() const { return dir_; }

    std::optional<Matrix> get(const std::string& model_id, uint64_t chunk_hash) const;
    void put(const std::string& model_id, uint64_t chunk_hash, const Matrix& features) const;

    uint64_t hits() const { return hits_; }
    uint64_t misses() const { return misses_; }
    uint64_t corrupt() const { return corrupt_; }

    // Invoked (if set) when a stored entry fails validation and is dropped.
    std::function<void(const std::string&)> on_warning;

    static std::string entry_name(const std::string& model_id, uint64_t chunk_hash);

private:
    std::filesystem::path dir_;
    mutable std::atomic<uint64_t> hits_{0};
    mutable std::atomic<uint64_t> misses_{0};
    mutable std::atomic<uint64_t> corrupt_{0};
};

} // namespace shift
