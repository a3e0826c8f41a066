#pragma once

#include <cstdint>
#include <vector>

#include "shift/catalog.hpp"
#include "shift/data.hpp"

namespace shift {

// Which input dimensions the synthetic extractor treats as class-bearing.
// Explicit dims come from the spec; otherwise the leading half of the input.
std::vector<uint32_t> resolve_signal_dims(const ExtractorSpec& spec, size_t input_dim);

// Map a block of raw input vectors to the model's feature space. Deterministic
// in (extractor seed, input values): same call, bitwise-same output. row_begin
// is the block's position within its reader; only precomputed extractors use
// it (their feature files are indexed by absolute row).
Matrix extract_features(const ModelRecord& model, const Matrix& input,
                        uint64_t row_begin = 0);

} // namespace shift
