#include "shift/util.hpp"

#include "shift/errors.hpp"

#include <chrono>
#include <cmath>

namespace shift {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::InvalidField: return "InvalidField";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::UnknownAttribute: return "UnknownAttribute";
        case ErrorCode::UnknownView: return "UnknownView";
        case ErrorCode::TypeMismatch: return "TypeMismatch";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::DeltaConflict: return "DeltaConflict";
        case ErrorCode::ChunkingMismatch: return "ChunkingMismatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ExtractorFailure: return "ExtractorFailure";
        case ErrorCode::CorruptEntry: return "CorruptEntry";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::UnsupportedMethod: return "UnsupportedMethod";
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::UnknownKeyword: return "UnknownKeyword";
        case ErrorCode::UnresolvedReference: return "UnresolvedReference";
        case ErrorCode::UnknownScoringAlgorithm: return "UnknownScoringAlgorithm";
        case ErrorCode::CyclicPlan: return "CyclicPlan";
        case ErrorCode::MissingCost: return "MissingCost";
        case ErrorCode::TaskFailed: return "TaskFailed";
        case ErrorCode::InvalidPool: return "InvalidPool";
        case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
        case ErrorCode::InsufficientBudget: return "InsufficientBudget";
        case ErrorCode::NoResultsForTarget: return "NoResultsForTarget";
        case ErrorCode::MissingAccuracy: return "MissingAccuracy";
        case ErrorCode::StaleCache: return "StaleCache";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Error";
}

uint64_t hash_bytes(const void* data, size_t n) {
    Hasher64 h;
    h.update(data, n);
    return h.digest();
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

uint64_t Rng::below(uint64_t n) {
    if (n == 0) fail(ErrorCode::OutOfRange, "Rng::below(0)");
    uint64_t threshold = (0 - n) % n;
    for (;;) {
        uint64_t r = next();
        if (r >= threshold) return r % n;
    }
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::vector<uint64_t> Rng::sample_without_replacement(uint64_t n, uint64_t k) {
    if (k > n) fail(ErrorCode::OutOfRange, "sample size exceeds population");
    // Selection sampling for small k, shuffle for dense draws.
    std::vector<uint64_t> out;
    out.reserve(size_t(k));
    if (k * 3 >= n) {
        std::vector<uint64_t> all(static_cast<size_t>(n));
        for (uint64_t i = 0; i < n; ++i) all[size_t(i)] = i;
        shuffle(all);
        out.assign(all.begin(), all.begin() + long(k));
    } else {
        std::vector<bool> taken(size_t(n), false);
        while (out.size() < k) {
            uint64_t v = below(n);
            if (!taken[size_t(v)]) {
                taken[size_t(v)] = true;
                out.push_back(v);
            }
        }
    }
    return out;
}

uint64_t derive_seed(uint64_t seed, const std::string& tag) {
    Hasher64 h;
    h.update_u64(seed);
    h.update_str(tag);
    return h.digest();
}

double now_ms() {
    auto t = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double, std::milli>(t).count();
}

} // namespace shift
