#pragma once

#include <cstdint>
#include <vector>

#include "shift/errors.hpp"
#include "shift/util.hpp"

namespace shift {

// Dense row-major float32 matrix. The feature pipeline keeps everything in
// float32 on purpose: extracted features round-trip through binary files and
// caches, and bitwise equality between a fresh computation and a cached one
// is part of the contract.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<float> values;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}
    Matrix(size_t r, size_t c, std::vector<float> v)
        : rows(r), cols(c), values(std::move(v)) {}

    float* row(size_t i) { return values.data() + i * cols; }
    const float* row(size_t i) const { return values.data() + i * cols; }

    float& at(size_t r, size_t c) { return values[r * cols + c]; }
    float at(size_t r, size_t c) const { return values[r * cols + c]; }

    bool empty() const { return rows == 0; }

    bool operator==(const Matrix&) const = default;
};

// A labeled sample block: n feature vectors with one int32 class label each.
struct SampleSet {
    Matrix x;
    std::vector<int32_t> y;

    SampleSet() = default;
    SampleSet(Matrix features, std::vector<int32_t> labels)
        : x(std::move(features)), y(std::move(labels)) {
        if (x.rows != y.size())
            fail(ErrorCode::DimensionMismatch, "feature rows != label count");
    }

    size_t size() const { return y.size(); }
    size_t dim() const { return x.cols; }

    bool operator==(const SampleSet&) const = default;
};

inline uint64_t hash_features(const Matrix& m) {
    Hasher64 h;
    h.update_u64(m.rows);
    h.update_u64(m.cols);
    h.update(m.values.data(), m.values.size() * sizeof(float));
    return h.digest();
}

inline uint64_t hash_samples(const SampleSet& s) {
    Hasher64 h;
    h.update_u64(s.x.rows);
    h.update_u64(s.x.cols);
    h.update(s.x.values.data(), s.x.values.size() * sizeof(float));
    h.update(s.y.data(), s.y.size() * sizeof(int32_t));
    return h.digest();
}

} // namespace shift
