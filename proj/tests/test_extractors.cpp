#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "shift/errors.hpp"
#include "shift/extractors.hpp"
#include "shift/feature_cache.hpp"
#include "shift/sample_io.hpp"
#include "shift/synth.hpp"

using namespace shift;
namespace fs = std::filesystem;

namespace {

ModelRecord projection_model(uint64_t seed, uint32_t out_dim, double knob,
                             std::vector<uint32_t> signal_dims = {}) {
    ModelRecord m;
    m.model_id = "m" + std::to_string(seed);
    m.feature_dim = out_dim;
    m.per_sample_inference_cost = 0.1;
    m.extractor.kind = ExtractorSpec::Kind::SyntheticProjection;
    m.extractor.seed = seed;
    m.extractor.quality_knob = knob;
    m.extractor.signal_dims = std::move(signal_dims);
    return m;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("shift_ext_" + std::to_string(uint64_t(rand()) * 100000 + uint64_t(rand())));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("extraction is deterministic and shape-correct") {
    auto data = make_blobs({.n_samples = 40, .dim = 6, .n_classes = 2, .seed = 3});
    auto model = projection_model(7, 12, 0.8);
    auto a = extract_features(model, data.x);
    auto b = extract_features(model, data.x);
    CHECK(a.rows == 40);
    CHECK(a.cols == 12);
    CHECK(a == b); // bitwise

    auto other = extract_features(projection_model(8, 12, 0.8), data.x);
    CHECK(a != other); // different seed, different projection
}

TEST_CASE("features do not depend on labels") {
    auto data = make_blobs({.n_samples = 20, .dim = 4, .n_classes = 2, .seed = 5});
    auto relabeled = data;
    for (auto& y : relabeled.y) y = 1 - y;
    auto model = projection_model(1, 8, 0.0);
    CHECK(extract_features(model, data.x) == extract_features(model, relabeled.x));
}

TEST_CASE("partitioned extraction concatenates to whole-reader extraction") {
    auto data = make_blobs({.n_samples = 30, .dim = 5, .n_classes = 3, .seed = 9});
    auto model = projection_model(2, 7, 0.5);
    auto whole = extract_features(model, data.x);

    size_t cut = 13;
    Matrix first(cut, 5), second(30 - cut, 5);
    std::copy_n(data.x.values.begin(), cut * 5, first.values.begin());
    std::copy(data.x.values.begin() + cut * 5, data.x.values.end(), second.values.begin());
    auto fa = extract_features(model, first, 0);
    auto fb = extract_features(model, second, cut);
    for (size_t i = 0; i < 30; ++i)
        for (size_t j = 0; j < 7; ++j) {
            float expect = whole.at(i, j);
            float got = i < cut ? fa.at(i, j) : fb.at(i - cut, j);
            CHECK(expect == got);
        }
}

TEST_CASE("signal dims are validated") {
    auto data = make_blobs({.n_samples = 10, .dim = 4, .n_classes = 2, .seed = 1});
    CHECK_THROWS_AS(extract_features(projection_model(1, 4, 1.0, {9}), data.x), Error);
    CHECK_THROWS_AS(extract_features(projection_model(1, 4, 1.0, {1, 1}), data.x), Error);
    CHECK(resolve_signal_dims(ExtractorSpec{}, 6) == std::vector<uint32_t>{0, 1, 2});
    CHECK(resolve_signal_dims(ExtractorSpec{}, 1) == std::vector<uint32_t>{0});
}

TEST_CASE("non-finite input is rejected") {
    Matrix x(1, 2);
    x.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(extract_features(projection_model(1, 2, 1.0), x), Error);
}

TEST_CASE("precomputed extractor serves stored rows") {
    TempDir tmp;
    auto file = (tmp.path / "feats.shfr").string();
    Matrix stored(6, 3);
    for (size_t i = 0; i < 18; ++i) stored.values[i] = float(i);
    write_samples(file, SampleSet(stored, std::vector<int32_t>(6, 0)));

    ModelRecord m;
    m.model_id = "pre";
    m.feature_dim = 3;
    m.per_sample_inference_cost = 0.1;
    m.extractor.kind = ExtractorSpec::Kind::Precomputed;
    m.extractor.precomputed_path = file;

    Matrix input(2, 5); // raw input dim is independent of the stored features
    auto out = extract_features(m, input, 4);
    CHECK(out.rows == 2);
    CHECK(out.at(0, 0) == 12.0f);
    CHECK(out.at(1, 2) == 17.0f);
    CHECK_THROWS_AS(extract_features(m, input, 5), Error); // past end of file

    m.feature_dim = 4;
    CHECK_THROWS_AS(extract_features(m, input, 0), Error); // dim mismatch
}

TEST_CASE("feature cache round-trips bitwise and counts traffic") {
    TempDir tmp;
    FeatureCache cache(tmp.path / "cache");
    auto data = make_blobs({.n_samples = 25, .dim = 4, .n_classes = 2, .seed = 2});
    auto model = projection_model(3, 6, 0.7);
    auto fresh = extract_features(model, data.x);
    uint64_t chunk_hash = hash_features(data.x);

    CHECK(!cache.get("m3", chunk_hash).has_value());
    cache.put("m3", chunk_hash, fresh);
    auto hit = cache.get("m3", chunk_hash);
    REQUIRE(hit.has_value());
    CHECK(*hit == fresh);
    CHECK(cache.hits() == 1);
    CHECK(cache.misses() == 1);

    // Different chunk content -> different key -> miss.
    CHECK(!cache.get("m3", chunk_hash ^ 1).has_value());
    // Different model, same chunk -> miss.
    CHECK(!cache.get("m4", chunk_hash).has_value());
}

TEST_CASE("corrupted cache entries degrade to misses with a warning") {
    TempDir tmp;
    FeatureCache cache(tmp.path / "cache");
    std::string warning;
    cache.on_warning = [&](const std::string& w) { warning = w; };

    Matrix fresh(3, 2);
    for (auto& v : fresh.values) v = 1.5f;
    cache.put("m", 42, fresh);

    auto entry = tmp.path / "cache" / FeatureCache::entry_name("m", 42);
    REQUIRE(fs::exists(entry));
    {
        std::fstream f(entry, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(10);
        f.put('\xff'); // flip a payload byte; checksum no longer matches
    }
    CHECK(!cache.get("m", 42).has_value());
    CHECK(cache.corrupt() == 1);
    CHECK(warning.find("checksum") != std::string::npos);
}

TEST_CASE("disabled cache is inert") {
    FeatureCache cache;
    CHECK(!cache.enabled());
    Matrix m(1, 1);
    cache.put("m", 1, m);
    CHECK(!cache.get("m", 1).has_value());
}

TEST_CASE("cache writes are write-once") {
    TempDir tmp;
    FeatureCache cache(tmp.path / "cache");
    Matrix first(1, 2), second(1, 2);
    first.values = {1.0f, 2.0f};
    second.values = {9.0f, 9.0f};
    cache.put("m", 5, first);
    cache.put("m", 5, second); // ignored: entry exists
    CHECK(*cache.get("m", 5) == first);
}
