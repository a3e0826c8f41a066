#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shift/data.hpp"

namespace shift {

// Dataset embedding "moments_v1": summary statistics good enough to tell
// related tasks apart without any learned component. Layout, for input dim d:
//   [0, d)           per-dimension mean
//   [d, 2d)          per-dimension population variance
//   [2d, 2d + 65*d)  per-class mean offset from the global mean; classes are
//                    capped at 64, everything above folds into an "other" slot
//   [.., +65)        normalized label histogram over the same 65 slots
inline constexpr uint32_t kEmbedClassBudget = 64;

inline size_t moments_dim(size_t d) { return 2 * d + (kEmbedClassBudget + 1) * d + (kEmbedClassBudget + 1); }

std::vector<double> embed_moments(const SampleSet& data);

enum class SimMetric { Cosine, AsymmetricCos };

// Cosine: 1 - cos(a, b). Asymmetric: 1 - cos(a, (a+b)/2) with a the target,
// so the distance is anchored at the task being searched for.
double embedding_distance(const std::vector<double>& target,
                          const std::vector<double>& candidate, SimMetric metric);

struct RankedReader {
    std::string reader_id;
    double distance = 0.0;
};

// Ascending distance to the target, ties broken by reader_id, first k kept.
std::vector<RankedReader> rank_datasets(
    const std::vector<double>& target,
    const std::vector<std::pair<std::string, std::vector<double>>>& candidates,
    SimMetric metric, size_t k);

} // namespace shift
