#include "shift/feature_cache.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "shift/errors.hpp"
#include "shift/sample_io.hpp"
#include "shift/util.hpp"

namespace shift {

// Entry layout: a sample container holding the feature matrix (labels all
// zero, unused), followed by an 8-byte little-endian hash of those container
// bytes. Validation failures surface as misses so a damaged cache can only
// cost time, not correctness.

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string FeatureCache::entry_name(const std::string& model_id, uint64_t chunk_hash) {
    Hasher64 h;
    h.update_str(model_id);
    h.update_u64(chunk_hash);
    return hex64(h.digest()) + ".feat";
}

std::optional<Matrix> FeatureCache::get(const std::string& model_id,
                                        uint64_t chunk_hash) const {
    if (!enabled()) {
        ++misses_;
        return std::nullopt;
    }
    auto path = dir_ / entry_name(model_id, chunk_hash);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ++misses_;
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();

    auto reject = [&](const std::string& why) -> std::optional<Matrix> {
        ++corrupt_;
        ++misses_;
        if (on_warning) on_warning("dropping cache entry " + path.string() + ": " + why);
        return std::nullopt;
    };

    if (bytes.size() < 8) return reject("too short for checksum");
    uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    std::string_view body(bytes.data(), bytes.size() - 8);
    if (hash_bytes(body.data(), body.size()) != stored) return reject("checksum mismatch");
    try {
        SampleSet s = decode_samples(body, "cache entry " + path.string());
        ++hits_;
        return std::move(s.x);
    } catch (const Error& e) {
        return reject(e.what());
    }
}

void FeatureCache::put(const std::string& model_id, uint64_t chunk_hash,
                       const Matrix& features) const {
    if (!enabled()) return;
    auto path = dir_ / entry_name(model_id, chunk_hash);
    if (std::filesystem::exists(path)) return; // write-once

    SampleSet wrapped(features, std::vector<int32_t>(features.rows, 0));
    std::string bytes = encode_samples(wrapped);
    uint64_t sum = hash_bytes(bytes.data(), bytes.size());
    char trailer[8];
    std::memcpy(trailer, &sum, 8);
    bytes.append(trailer, 8);

    // Unique temp name per writer, then an atomic rename; concurrent writers
    // of the same key land identical content, so last-rename-wins is fine.
    static std::atomic<uint64_t> counter{0};
    auto tmp = path;
    tmp += ".tmp" + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace shift
