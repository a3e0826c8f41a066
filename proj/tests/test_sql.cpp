#include <doctest.h>

#include <algorithm>
#include <map>

#include "shift/errors.hpp"
#include "shift/sql_eval.hpp"
#include "shift/util.hpp"

using namespace shift;

namespace {

ModelRecord model(const std::string& id, Modality input, uint64_t n_params,
                  std::optional<double> upstream) {
    ModelRecord m;
    m.model_id = id;
    m.input_modality = input;
    m.n_params = n_params;
    m.upstream_accuracy = upstream;
    m.feature_dim = 4;
    m.per_sample_inference_cost = 0.5;
    m.load_cost = 10;
    return m;
}

ReaderRecord reader(const std::string& id, Modality modality, const std::string& type) {
    ReaderRecord r;
    r.reader_id = id;
    r.modality = modality;
    r.n_samples = 100;
    r.label_cardinality = 2;
    r.type_tag = type;
    return r;
}

void fill_catalog(Catalog& c) {
    c.register_model(model("v1", Modality::Vision, 5'000'000, 0.90));
    c.register_model(model("v2", Modality::Vision, 20'000'000, 0.95));
    c.register_model(model("v3", Modality::Vision, 8'000'000, std::nullopt));
    c.register_model(model("t1", Modality::Text, 1'000'000, 0.99));
    c.register_reader(reader("d1", Modality::Vision, "Structured"));
    c.register_reader(reader("d2", Modality::Vision, "Natural"));
    c.register_reader(reader("d3", Modality::Text, "Structured"));
    c.record_benchmark_result("v1", "d1", 0.80);
    c.record_benchmark_result("v2", "d1", 0.85);
    c.record_benchmark_result("v3", "d1", 0.70);
    c.record_benchmark_result("v1", "d2", 0.60);
    c.record_benchmark_result("v2", "d2", 0.65);
    c.record_benchmark_result("t1", "d3", 0.90);
}

std::vector<std::string> ids(const Table& t, const std::string& col = "ModelId") {
    int idx = t.column_index(col);
    REQUIRE(idx >= 0);
    std::vector<std::string> out;
    for (const auto& row : t.rows) out.push_back(row.values[idx].text);
    return out;
}

Table run(const char* text) {
    Catalog c;
    fill_catalog(c);
    SqlEvaluator ev(c.view());
    return ev.eval_script(parse_script(text));
}

} // namespace

TEST_CASE("filter and argmax match a linear scan") {
    auto t = run("SELECT ModelId FROM Models WHERE Input = 'Vision' "
                 "ORDER BY UpstreamAccuracy DESC LIMIT 1");
    CHECK(ids(t) == std::vector<std::string>{"v2"});

    // Oracle: scan the catalog by hand.
    Catalog c;
    fill_catalog(c);
    std::string best;
    double best_acc = -1;
    for (const auto& m : c.view().models()) {
        if (m.input_modality != Modality::Vision || !m.upstream_accuracy) continue;
        if (*m.upstream_accuracy > best_acc) {
            best_acc = *m.upstream_accuracy;
            best = m.model_id;
        }
    }
    CHECK(ids(t).front() == best);
}

TEST_CASE("numeric suffixes scale literals") {
    auto t = run("SELECT ModelId FROM Models WHERE Input = 'Vision' AND nParam <= 10M "
                 "ORDER BY nParam");
    CHECK(ids(t) == std::vector<std::string>{"v1", "v3"});
    auto k = run("SELECT ModelId FROM Models WHERE nParam < 1500K ORDER BY ModelId");
    CHECK(ids(k) == std::vector<std::string>{"t1"});
}

TEST_CASE("missing values order last in either direction") {
    auto desc = run("SELECT ModelId FROM Models WHERE Input = 'Vision' "
                    "ORDER BY UpstreamAccuracy DESC");
    CHECK(ids(desc) == std::vector<std::string>{"v2", "v1", "v3"});
    auto asc = run("SELECT ModelId FROM Models WHERE Input = 'Vision' "
                   "ORDER BY UpstreamAccuracy ASC");
    CHECK(ids(asc) == std::vector<std::string>{"v1", "v2", "v3"});
}

TEST_CASE("order ties break by entity id") {
    Catalog c;
    c.register_model(model("b", Modality::Vision, 1000, 0.5));
    c.register_model(model("a", Modality::Vision, 1000, 0.5));
    c.register_model(model("c", Modality::Vision, 1000, 0.5));
    SqlEvaluator ev(c.view());
    auto t = ev.eval_script(parse_script("SELECT ModelId FROM Models ORDER BY nParam"));
    CHECK(ids(t) == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("natural join merges on shared attributes") {
    auto t = run("SELECT ModelId, DataReaderId, Accuracy, nParam FROM Models "
                 "NATURAL JOIN BenchmarkResults ORDER BY Accuracy DESC");
    CHECK(t.columns ==
          std::vector<std::string>{"ModelId", "DataReaderId", "Accuracy", "nParam"});
    CHECK(t.rows.size() == 6);
    CHECK(ids(t).front() == "t1"); // 0.90 tops the list
}

TEST_CASE("qualified references pull absent views into the join") {
    // Models is not in FROM; Model.Input must bring it in via ModelId.
    auto t = run("SELECT ModelId FROM BenchmarkResults NATURAL JOIN DataReaders "
                 "WHERE Model.Input = 'Vision' AND DataReader.Type == 'Structured' "
                 "ORDER BY ModelId");
    CHECK(ids(t) == std::vector<std::string>{"v1", "v2", "v3"});

    // Models and DataReaders share nothing; the results view bridges them.
    auto u = run("SELECT ModelId FROM Models WHERE DataReaders.Type = 'Structured' "
                 "AND Input = 'Vision' ORDER BY ModelId");
    CHECK(ids(u) == std::vector<std::string>{"v1", "v2", "v3"});
}

TEST_CASE("top-k per group matches the sort-per-group oracle") {
    auto t = run("SELECT ModelId, DataReaderId, Accuracy FROM BenchmarkResults "
                 "RETRIEVE 2 GRP DataReaderId ORD Accuracy DESC");
    // d1 keeps 0.85/0.80, d2 keeps 0.65/0.60, d3 keeps 0.90.
    REQUIRE(t.rows.size() == 5);
    CHECK(ids(t) == std::vector<std::string>{"v2", "v1", "v2", "v1", "t1"});

    // Randomized oracle comparison.
    Rng rng(321);
    Catalog c;
    for (int m = 0; m < 6; ++m)
        c.register_model(model("m" + std::to_string(m), Modality::Vision, 1000, 0.5));
    for (int d = 0; d < 3; ++d)
        c.register_reader(reader("d" + std::to_string(d), Modality::Vision, "Natural"));
    std::map<std::string, std::vector<std::pair<double, std::string>>> by_reader;
    for (int m = 0; m < 6; ++m) {
        for (int d = 0; d < 3; ++d) {
            if (rng.below(4) == 0) continue; // leave holes
            double acc = rng.below(20) / 20.0;
            c.record_benchmark_result("m" + std::to_string(m), "d" + std::to_string(d), acc);
            by_reader["d" + std::to_string(d)].emplace_back(acc, "m" + std::to_string(m));
        }
    }
    SqlEvaluator ev(c.view());
    auto got = ev.eval_script(
        parse_script("SELECT DataReaderId, ModelId FROM BenchmarkResults "
                     "RETRIEVE 3 GRP DataReaderId ORD Accuracy DESC"));
    std::vector<std::pair<std::string, std::string>> oracle;
    for (auto& [reader_id, entries] : by_reader) {
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (size_t i = 0; i < entries.size() && i < 3; ++i)
            oracle.emplace_back(reader_id, entries[i].second);
    }
    REQUIRE(got.rows.size() == oracle.size());
    for (size_t i = 0; i < oracle.size(); ++i) {
        CHECK(got.rows[i].values[0].text == oracle[i].first);
        CHECK(got.rows[i].values[1].text == oracle[i].second);
    }
}

TEST_CASE("union concatenates in order and drops later duplicates") {
    auto t = run("(SELECT ModelId FROM Models WHERE Input = 'Vision' "
                 "ORDER BY nParam ASC LIMIT 2) A "
                 "UNION (SELECT ModelId FROM Models WHERE Input = 'Vision' "
                 "ORDER BY nParam DESC LIMIT 2) B");
    // A = [v1, v3]; B = [v2, v3]; v3 deduplicates.
    CHECK(ids(t) == std::vector<std::string>{"v1", "v3", "v2"});

    CHECK_THROWS_AS(run("(SELECT ModelId FROM Models) A UNION "
                        "(SELECT ModelId, nParam FROM Models) B"),
                    Error);
}

TEST_CASE("named results restrict later statements") {
    auto t = run("Q1 := SELECT ModelId FROM Models WHERE Input = 'Vision' "
                 "ORDER BY UpstreamAccuracy DESC LIMIT 1 "
                 "SELECT ModelId FROM Models WHERE Input = 'Vision' AND "
                 "ModelId NOT IN Q1 ORDER BY ModelId");
    CHECK(ids(t) == std::vector<std::string>{"v1", "v3"});

    auto u = run("Pool := SELECT ModelId FROM Models WHERE nParam <= 10M "
                 "SELECT ModelId FROM Pool ORDER BY ModelId");
    CHECK(ids(u) == std::vector<std::string>{"t1", "v1", "v3"});
}

TEST_CASE("inline IN subqueries evaluate once and may bind an alias") {
    auto t = run("SELECT ModelId FROM Models WHERE ModelId IN "
                 "(SELECT ModelId FROM Models WHERE nParam <= 10M) Small "
                 "AND Input = 'Vision' ORDER BY ModelId");
    CHECK(ids(t) == std::vector<std::string>{"v1", "v3"});
}

TEST_CASE("evaluation is deterministic and repeatable") {
    Catalog c;
    fill_catalog(c);
    SqlEvaluator ev(c.view());
    auto script = parse_script("SELECT ModelId FROM Models NATURAL JOIN BenchmarkResults "
                               "WHERE Accuracy >= 0.6 ORDER BY Accuracy DESC");
    auto a = ev.eval_script(script);
    auto b = ev.eval_script(script);
    REQUIRE(a.rows.size() == b.rows.size());
    for (size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].values == b.rows[i].values);
}

TEST_CASE("errors carry the right codes") {
    auto code_of = [](const char* text) {
        try {
            run(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::ConfigError; // sentinel for "did not throw"
    };
    CHECK(code_of("SELECT Nope FROM Models") == ErrorCode::UnknownAttribute);
    CHECK(code_of("SELECT Models.nSamples FROM Models") == ErrorCode::UnknownAttribute);
    CHECK(code_of("SELECT ModelId FROM Nonsense") == ErrorCode::UnknownView);
    CHECK(code_of("SELECT ModelId FROM Models WHERE Input = 5") == ErrorCode::TypeMismatch);
    CHECK(code_of("SELECT ModelId FROM Models WHERE nParam = 'five'") ==
          ErrorCode::TypeMismatch);
    CHECK(code_of("SELECT ModelId FROM Models WHERE ModelId IN Missing") ==
          ErrorCode::UnresolvedReference);
    CHECK(code_of("SELECT ModelId FROM Models ORDER BY CosineNN LIMIT 1 "
                  "TESTED ON T TRAINED ON R") == ErrorCode::UnsupportedMethod);
}

TEST_CASE("star projection keeps the full schema") {
    auto t = run("SELECT * FROM DataReaders WHERE Type = 'Structured' ORDER BY DataReaderId");
    CHECK(t.columns.size() == 7);
    CHECK(ids(t, "DataReaderId") == std::vector<std::string>{"d1", "d3"});
}
