#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "shift/data.hpp"

namespace shift {

// Binary sample container:
//   magic "SHFR" | version u16 | n_samples u64 | feature_dim u32 | label_dtype u8
//   [index list: n_samples x u64, replacement files only]
//   features: n_samples * feature_dim float32, row-major
//   labels:   n_samples of label_dtype (0 = int32)
// All fields little-endian. Whether a file carries the index list is decided
// by the caller (a replacement payload is registered as such), not by a flag
// in the header.

inline constexpr uint16_t kSampleFileVersion = 1;

void write_samples(const std::filesystem::path& path, const SampleSet& samples);
SampleSet read_samples(const std::filesystem::path& path);

// In-memory forms of the same container, for embedding in other files.
std::string encode_samples(const SampleSet& samples);
SampleSet decode_samples(std::string_view bytes, const std::string& context);

void write_change_samples(const std::filesystem::path& path,
                          const std::vector<uint64_t>& indices,
                          const SampleSet& samples);
struct ChangePayload {
    std::vector<uint64_t> indices;
    SampleSet samples;
};
ChangePayload read_change_samples(const std::filesystem::path& path);

} // namespace shift
