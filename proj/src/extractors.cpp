#include "shift/extractors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "shift/errors.hpp"
#include "shift/sample_io.hpp"
#include "shift/util.hpp"

namespace shift {

std::vector<uint32_t> resolve_signal_dims(const ExtractorSpec& spec, size_t input_dim) {
    std::vector<uint32_t> dims = spec.signal_dims;
    if (dims.empty()) {
        size_t half = std::max<size_t>(1, input_dim / 2);
        for (size_t j = 0; j < half; ++j) dims.push_back(uint32_t(j));
        return dims;
    }
    std::set<uint32_t> seen;
    for (auto d : dims) {
        if (d >= input_dim)
            fail(ErrorCode::DimensionMismatch,
                 "signal dim " + std::to_string(d) + " outside input of width " +
                     std::to_string(input_dim));
        if (!seen.insert(d).second)
            fail(ErrorCode::InvalidField, "duplicate signal dim " + std::to_string(d));
    }
    return dims;
}

namespace {

// out_dim x in_dim Gaussian projection, scaled so row norms stay O(1).
std::vector<double> seeded_projection(uint64_t seed, const char* tag, size_t out_dim,
                                      size_t in_dim) {
    Rng rng(derive_seed(seed, tag));
    std::vector<double> m(out_dim * std::max<size_t>(in_dim, 1), 0.0);
    if (in_dim == 0) return m;
    double scale = 1.0 / std::sqrt(double(in_dim));
    for (auto& v : m) v = rng.normal() * scale;
    return m;
}

Matrix synthetic_project(const ModelRecord& model, const Matrix& input) {
    const size_t n = input.rows, d = input.cols, out = model.feature_dim;
    const ExtractorSpec& spec = model.extractor;

    auto signal = resolve_signal_dims(spec, d);
    std::vector<uint32_t> noise;
    {
        std::set<uint32_t> sig(signal.begin(), signal.end());
        for (size_t j = 0; j < d; ++j)
            if (!sig.count(uint32_t(j))) noise.push_back(uint32_t(j));
    }

    auto g = seeded_projection(spec.seed, "signal-proj", out, signal.size());
    auto w = seeded_projection(spec.seed, "noise-proj", out, noise.size());
    std::vector<double> b(out);
    {
        Rng rng(derive_seed(spec.seed, "bias"));
        for (auto& v : b) v = 0.1 * rng.normal();
    }

    Matrix result(n, out);
    std::vector<double> xs(signal.size()), xn(noise.size());
    for (size_t i = 0; i < n; ++i) {
        const float* row = input.row(i);
        for (size_t j = 0; j < signal.size(); ++j) xs[j] = row[signal[j]];
        for (size_t j = 0; j < noise.size(); ++j) xn[j] = row[noise[j]];
        for (size_t o = 0; o < out; ++o) {
            double acc = b[o];
            const double* grow = g.data() + o * std::max<size_t>(signal.size(), 1);
            for (size_t j = 0; j < signal.size(); ++j)
                acc += spec.quality_knob * grow[j] * xs[j];
            const double* wrow = w.data() + o * std::max<size_t>(noise.size(), 1);
            for (size_t j = 0; j < noise.size(); ++j) acc += wrow[j] * xn[j];
            result.at(i, o) = float(acc);
        }
    }
    return result;
}

Matrix precomputed_lookup(const ModelRecord& model, const Matrix& input,
                          uint64_t row_begin) {
    const ExtractorSpec& spec = model.extractor;
    if (spec.precomputed_path.empty())
        fail(ErrorCode::ExtractorFailure,
             "model '" + model.model_id + "' has no precomputed feature file");
    SampleSet stored = read_samples(spec.precomputed_path);
    if (stored.dim() != model.feature_dim)
        fail(ErrorCode::DimensionMismatch,
             "precomputed features have dim " + std::to_string(stored.dim()) +
                 ", model expects " + std::to_string(model.feature_dim));
    if (row_begin + input.rows > stored.size())
        fail(ErrorCode::ExtractorFailure,
             "precomputed feature file too short for rows [" +
                 std::to_string(row_begin) + ", " +
                 std::to_string(row_begin + input.rows) + ")");
    Matrix result(input.rows, model.feature_dim);
    for (size_t i = 0; i < input.rows; ++i)
        std::copy_n(stored.x.row(row_begin + i), model.feature_dim, result.row(i));
    return result;
}

} // namespace

Matrix extract_features(const ModelRecord& model, const Matrix& input,
                        uint64_t row_begin) {
    if (model.feature_dim < 1)
        fail(ErrorCode::DimensionMismatch, "model feature_dim must be >= 1");
    for (float v : input.values)
        if (!std::isfinite(v))
            fail(ErrorCode::ExtractorFailure, "non-finite value in extractor input");

    switch (model.extractor.kind) {
        case ExtractorSpec::Kind::SyntheticProjection:
            return synthetic_project(model, input);
        case ExtractorSpec::Kind::Precomputed:
            return precomputed_lookup(model, input, row_begin);
        case ExtractorSpec::Kind::ExternalHook:
            fail(ErrorCode::ExtractorFailure,
                 "external extractor hooks are not wired into this build");
    }
    fail(ErrorCode::ExtractorFailure, "unhandled extractor kind");
}

} // namespace shift
