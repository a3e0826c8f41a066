#include "shift/datasim.hpp"

#include <algorithm>
#include <cmath>

#include "shift/errors.hpp"

namespace shift {

std::vector<double> embed_moments(const SampleSet& data) {
    const size_t d = data.dim(), n = data.size();
    if (n == 0) fail(ErrorCode::EmptySplit, "cannot embed an empty reader");

    std::vector<double> out(moments_dim(d), 0.0);
    double* mean = out.data();
    double* var = out.data() + d;
    double* offsets = out.data() + 2 * d;                             // 65 blocks of d
    double* hist = out.data() + 2 * d + (kEmbedClassBudget + 1) * d; // 65 slots

    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) mean[j] += double(data.x.at(i, j));
    for (size_t j = 0; j < d; ++j) mean[j] /= double(n);

    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) {
            double diff = double(data.x.at(i, j)) - mean[j];
            var[j] += diff * diff;
        }
    for (size_t j = 0; j < d; ++j) var[j] /= double(n);

    std::vector<size_t> class_count(kEmbedClassBudget + 1, 0);
    for (size_t i = 0; i < n; ++i) {
        size_t slot = std::min<size_t>(size_t(std::max(data.y[i], 0)), kEmbedClassBudget);
        ++class_count[slot];
        double* block = offsets + slot * d;
        for (size_t j = 0; j < d; ++j) block[j] += double(data.x.at(i, j));
    }
    for (size_t slot = 0; slot <= kEmbedClassBudget; ++slot) {
        double* block = offsets + slot * d;
        if (class_count[slot] == 0) continue; // absent class: zero offset
        for (size_t j = 0; j < d; ++j)
            block[j] = block[j] / double(class_count[slot]) - mean[j];
    }
    for (size_t slot = 0; slot <= kEmbedClassBudget; ++slot)
        hist[slot] = double(class_count[slot]) / double(n);

    return out;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t j = 0; j < a.size(); ++j) {
        dot += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    if (na <= 0 || nb <= 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

double embedding_distance(const std::vector<double>& target,
                          const std::vector<double>& candidate, SimMetric metric) {
    if (target.size() != candidate.size())
        fail(ErrorCode::DimMismatch, "embedding dims differ: " +
                                         std::to_string(target.size()) + " vs " +
                                         std::to_string(candidate.size()));
    if (metric == SimMetric::Cosine) return 1.0 - cosine(target, candidate);
    std::vector<double> mid(target.size());
    for (size_t j = 0; j < target.size(); ++j) mid[j] = 0.5 * (target[j] + candidate[j]);
    return 1.0 - cosine(target, mid);
}

std::vector<RankedReader> rank_datasets(
    const std::vector<double>& target,
    const std::vector<std::pair<std::string, std::vector<double>>>& candidates,
    SimMetric metric, size_t k) {
    std::vector<RankedReader> ranked;
    ranked.reserve(candidates.size());
    for (const auto& [id, vec] : candidates)
        ranked.push_back({id, embedding_distance(target, vec, metric)});
    std::sort(ranked.begin(), ranked.end(), [](const RankedReader& a, const RankedReader& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.reader_id < b.reader_id;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

} // namespace shift
