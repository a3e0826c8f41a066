#include "shift/synth.hpp"

#include <algorithm>

#include "shift/errors.hpp"
#include "shift/util.hpp"

namespace shift {

SampleSet make_planted_blobs(size_t n_samples, const Matrix& class_centers,
                             double noise_sigma, uint64_t seed) {
    const size_t k = class_centers.rows, d = class_centers.cols;
    if (k == 0 || d == 0) fail(ErrorCode::InvalidField, "class centers must be non-empty");

    Rng rng(derive_seed(seed, "planted-blobs"));
    Matrix x(n_samples, d);
    std::vector<int32_t> y(n_samples);
    for (size_t i = 0; i < n_samples; ++i) {
        size_t c = i % k;
        y[i] = int32_t(c);
        const float* center = class_centers.row(c);
        for (size_t j = 0; j < d; ++j)
            x.at(i, j) = float(center[j] + noise_sigma * rng.normal());
    }

    // Shuffle rows so storage order carries no label information.
    std::vector<uint64_t> perm(n_samples);
    for (size_t i = 0; i < n_samples; ++i) perm[i] = i;
    Rng(derive_seed(seed, "row-order")).shuffle(perm);
    Matrix xs(n_samples, d);
    std::vector<int32_t> ys(n_samples);
    for (size_t i = 0; i < n_samples; ++i) {
        std::copy_n(x.row(perm[i]), d, xs.row(i));
        ys[i] = y[perm[i]];
    }
    return SampleSet(std::move(xs), std::move(ys));
}

SampleSet make_blobs(const BlobSpec& spec) {
    if (spec.dim == 0 || spec.n_classes == 0)
        fail(ErrorCode::InvalidField, "blob spec needs dim >= 1 and n_classes >= 1");

    std::vector<uint32_t> signal = spec.signal_dims;
    if (signal.empty())
        for (size_t j = 0; j < std::max<size_t>(1, spec.dim / 2); ++j)
            signal.push_back(uint32_t(j));
    for (auto s : signal)
        if (s >= spec.dim)
            fail(ErrorCode::InvalidField, "signal dim outside input width");

    Matrix centers(spec.n_classes, spec.dim);
    for (uint32_t c = 0; c < spec.n_classes; ++c)
        for (size_t j = 0; j < signal.size(); ++j)
            centers.at(c, signal[j]) =
                float(spec.separation * (((c >> j) & 1u) ? 1.0 : -1.0));

    auto s = make_planted_blobs(spec.n_samples, centers, spec.noise_sigma, spec.seed);

    // Non-signal dims were sampled around a 0 center, so they are already
    // label-independent N(0, noise_sigma); widen them to unit variance.
    std::vector<bool> is_signal(spec.dim, false);
    for (auto j : signal) is_signal[j] = true;
    if (spec.noise_sigma != 1.0 && spec.noise_sigma > 0) {
        float widen = float(1.0 / spec.noise_sigma);
        for (size_t i = 0; i < s.size(); ++i)
            for (size_t j = 0; j < spec.dim; ++j)
                if (!is_signal[j]) s.x.at(i, j) *= widen;
    }

    if (spec.mean_shift != 0.0)
        for (auto& v : s.x.values) v += float(spec.mean_shift);
    return s;
}

} // namespace shift
