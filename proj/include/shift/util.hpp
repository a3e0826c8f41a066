#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace shift {

enum class ErrorCode;

// Streaming 64-bit content hash (FNV-1a core with an avalanche finisher).
// Stable across platforms; used for cache keys and execution ids, not security.
class Hasher64 {
public:
    Hasher64& update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    Hasher64& update_u64(uint64_t v) {
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        return update(buf, 8);
    }

    Hasher64& update_u32(uint32_t v) { return update_u64(v); }

    Hasher64& update_str(const std::string& s) {
        update_u64(s.size());
        return update(s.data(), s.size());
    }

    Hasher64& update_double(double d) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        __builtin_memcpy(&bits, &d, 8);
        return update_u64(bits);
    }

    uint64_t digest() const {
        uint64_t h = state_;
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        h *= 0xc4ceb9fe1a85ec53ULL;
        h ^= h >> 33;
        return h;
    }

private:
    uint64_t state_ = 0xcbf29ce484222325ULL;
};

uint64_t hash_bytes(const void* data, size_t n);
std::string hex64(uint64_t v);

// Deterministic PRNG (SplitMix64). The standard <random> distributions are
// not bit-identical across library implementations, so everything that needs
// reproducible output goes through this.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t below(uint64_t n);

    // Uniform double in [0, 1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n), order randomized.
    std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t k);

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable sub-seed for a named component of a larger seeded computation.
uint64_t derive_seed(uint64_t seed, const std::string& tag);

double now_ms();

} // namespace shift
