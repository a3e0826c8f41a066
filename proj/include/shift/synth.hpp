#pragma once

#include <cstdint>
#include <vector>

#include "shift/data.hpp"

namespace shift {

// Seeded Gaussian blob generator. Class structure lives only in the listed
// signal dims: class c sits at the hypercube vertex separation * (±1, ±1, ...)
// indexed by the bits of c, every other dim is N(0,1) noise independent of the
// label. Labels are balanced (round-robin) and rows are shuffled.
struct BlobSpec {
    size_t n_samples = 0;
    size_t dim = 0;
    uint32_t n_classes = 2;
    double separation = 3.0;
    double noise_sigma = 0.5;
    std::vector<uint32_t> signal_dims; // empty = leading half
    uint64_t seed = 0;
    double mean_shift = 0.0; // added to every coordinate, for drift experiments
};

SampleSet make_blobs(const BlobSpec& spec);

// Same sampling scheme with caller-chosen class centers (n_classes x dim);
// lets tests build distributions whose class geometry disagrees on purpose.
SampleSet make_planted_blobs(size_t n_samples, const Matrix& class_centers,
                             double noise_sigma, uint64_t seed);

} // namespace shift
