#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <json.hpp>

#include "shift/datasim.hpp"
#include "shift/engine.hpp"
#include "shift/errors.hpp"
#include "shift/extractors.hpp"
#include "shift/proxies.hpp"
#include "shift/synth.hpp"

using namespace shift;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("shift_eng_" + std::to_string(uint64_t(rand()) * 100000 + uint64_t(rand())));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelRecord knob_model(const std::string& id, double knob,
                       std::optional<double> upstream = std::nullopt) {
    ModelRecord m;
    m.model_id = id;
    m.input_modality = Modality::Vision;
    m.n_params = 1'000'000;
    m.upstream_accuracy = upstream;
    m.feature_dim = 8;
    m.per_sample_inference_cost = 0.5;
    m.load_cost = 10;
    m.extractor.kind = ExtractorSpec::Kind::SyntheticProjection;
    m.extractor.seed = derive_seed(7, id);
    m.extractor.quality_knob = knob;
    return m;
}

MutableReader blob_reader(const std::string& id, size_t n, uint64_t seed,
                          double mean_shift = 0.0) {
    BlobSpec spec;
    spec.n_samples = n;
    spec.dim = 6;
    spec.n_classes = 3;
    spec.separation = 3.0;
    spec.noise_sigma = 0.5;
    spec.seed = seed;
    spec.mean_shift = mean_shift;
    return MutableReader(id, make_blobs(spec));
}

ReaderRecord record_for(const MutableReader& r, const std::string& type = "Query") {
    ReaderRecord rec;
    rec.reader_id = r.id();
    rec.modality = Modality::Vision;
    rec.n_samples = r.size();
    rec.label_cardinality = r.label_cardinality();
    rec.content_hash = r.content_hash();
    rec.type_tag = type;
    return rec;
}

// Catalog with racing models plus train/test readers the queries name
// directly. Holds the catalog by value, so keep the struct alive.
struct World {
    Catalog catalog;
    std::unique_ptr<Engine> engine;

    World(const std::vector<std::pair<std::string, double>>& knobs,
          EngineConfig config = {}) {
        engine = std::make_unique<Engine>(catalog, std::move(config));
        for (const auto& [id, knob] : knobs) catalog.register_model(knob_model(id, knob));
        MutableReader train = blob_reader("TrainReader", 300, 11);
        MutableReader test = blob_reader("TestReader", 200, 12);
        catalog.register_reader(record_for(train));
        catalog.register_reader(record_for(test));
        engine->put_reader(train);
        engine->put_reader(test);
    }
};

// Full-data proxy accuracy computed outside the engine.
double oracle_accuracy(const ModelRecord& m, const MutableReader& train,
                       const MutableReader& test, const ProxyRequest& request) {
    SampleSet tr = train.materialize();
    SampleSet te = test.materialize();
    SampleSet ftr(extract_features(m, tr.x), tr.y);
    SampleSet fte(extract_features(m, te.x), te.y);
    return compute_proxy(ftr, fte, request);
}

const char* kRace = "SELECT ModelId FROM Models WHERE Input = 'Vision' "
                    "ORDER BY EuclideanNN ASC LIMIT 1 "
                    "TESTED ON TestReader TRAINED ON TrainReader";

} // namespace

TEST_CASE("plain proxy race matches the brute-force oracle") {
    World w({{"m1", 0.15}, {"m2", 0.4}, {"m3", 0.7}, {"m4", 1.0}});
    ExecOptions opts;
    opts.force_mode = PlanMode::Plain;
    auto res = w.engine->execute(kRace, opts);

    std::string best;
    double best_acc = -1;
    const MutableReader& train = *w.engine->find_reader("TrainReader");
    const MutableReader& test = *w.engine->find_reader("TestReader");
    ProxyRequest req;
    req.method = ProxyMethod::EuclideanNN;
    for (const auto& m : w.catalog.view().models()) {
        double acc = oracle_accuracy(m, train, test, req);
        if (acc > best_acc) {
            best_acc = acc;
            best = m.model_id;
        }
    }
    REQUIRE(res.ranking.size() == 1);
    CHECK(res.ranking[0] == best);
    CHECK(res.table.columns == std::vector<std::string>{"ModelId"});

    // The report carries every contender's score, best first.
    REQUIRE(res.report.views.size() == 1);
    const ViewExecution& vx = res.report.views[0];
    CHECK(vx.mode == PlanMode::Plain);
    REQUIRE(vx.scores.size() == 4);
    CHECK(vx.scores[0].id == best);
    CHECK(vx.scores[0].value == doctest::Approx(best_acc));
    for (size_t i = 1; i < vx.scores.size(); ++i)
        CHECK(vx.scores[i - 1].loss <= vx.scores[i].loss);
}

TEST_CASE("translation plans two inference tasks and one proxy per cold model") {
    World w({{"m1", 0.2}, {"m2", 0.5}, {"m3", 0.9}});
    Script script = parse_script(kRace);

    auto tr = w.engine->translate(script);
    CHECK(tr.count(TaskKind::Inference) == 6);
    CHECK(tr.count(TaskKind::Proxy) == 3);
    CHECK(tr.count(TaskKind::DataSim) == 0);
    REQUIRE(tr.views.size() == 1);
    CHECK(tr.views[0].method == "EuclideanNN");
    CHECK(tr.views[0].models_pruned == 0);

    // Stored proxy values prune whole model sub-plans.
    ExecOptions plain;
    plain.force_mode = PlanMode::Plain;
    w.engine->execute(script, plain);
    auto again = w.engine->translate(script);
    CHECK(again.plan.size() == 0);
    CHECK(again.views[0].models_pruned == 3);
}

TEST_CASE("repeat executions answer from the store") {
    World w({{"m1", 0.2}, {"m2", 0.5}, {"m3", 0.9}});
    ExecOptions opts;
    opts.force_mode = PlanMode::Plain;
    auto first = w.engine->execute(kRace, opts);
    auto second = w.engine->execute(kRace, opts);

    CHECK(second.ranking == first.ranking);
    REQUIRE(second.report.views.size() == 1);
    REQUIRE(first.report.views.size() == 1);
    CHECK(second.report.views[0].scores.size() == first.report.views[0].scores.size());

    CHECK(first.report.proxy_misses == 3);
    CHECK(first.report.extract_calls == 6);
    CHECK(first.report.proxy_evals == 3);

    CHECK(second.report.proxy_hits == 3);
    CHECK(second.report.proxy_misses == 0);
    CHECK(second.report.extract_calls == 0);
    CHECK(second.report.proxy_evals == 0);
    CHECK(second.report.inference_tasks == 0);
    CHECK(second.report.proxy_tasks == 0);
    CHECK(second.report.tasks_executed == 0);
}

TEST_CASE("union query keeps the upstream pick and races the rest") {
    // m1 has the best upstream accuracy but a weak extractor; the proxy leg
    // must pick the best of the remaining three.
    World w({});
    w.catalog.register_model(knob_model("m1", 0.15, 0.99));
    w.catalog.register_model(knob_model("m2", 0.4, 0.80));
    w.catalog.register_model(knob_model("m3", 1.0, 0.75));
    w.catalog.register_model(knob_model("m4", 0.7, 0.70));
    const char* q4 =
        "Q1 := SELECT ModelId FROM Models WHERE Input = 'Vision' "
        "ORDER BY UpstreamAccuracy DESC LIMIT 1 "
        "Q4 := Q1 UNION SELECT ModelId FROM Models "
        "WHERE Input = 'Vision' AND ModelId NOT IN Q1 "
        "ORDER BY Linear(lr=0.1) ASC LIMIT 1 "
        "TESTED ON TestReader TRAINED ON TrainReader";
    ExecOptions opts;
    opts.force_mode = PlanMode::Plain;
    auto res = w.engine->execute(q4, opts);

    const MutableReader& train = *w.engine->find_reader("TrainReader");
    const MutableReader& test = *w.engine->find_reader("TestReader");
    std::string best;
    double best_acc = -1;
    for (const std::string id : {"m2", "m3", "m4"}) {
        ProxyRequest req;
        req.method = ProxyMethod::Linear;
        req.linear.learning_rate = 0.1;
        req.linear.seed = derive_seed(0, id);
        double acc = oracle_accuracy(*w.catalog.view().model(id), train, test, req);
        if (acc > best_acc) {
            best_acc = acc;
            best = id;
        }
    }
    CHECK(res.ranking == std::vector<std::string>{"m1", best});
}

TEST_CASE("empty pool yields an empty result and no tasks") {
    World w({{"m1", 0.5}});
    auto res = w.engine->execute(
        "SELECT ModelId FROM Models WHERE Input = 'Text' "
        "ORDER BY CosineNN ASC LIMIT 1 TESTED ON TestReader TRAINED ON TrainReader");
    CHECK(res.table.rows.empty());
    CHECK(res.table.columns == std::vector<std::string>{"ModelId"});
    CHECK(res.ranking.empty());
    CHECK(res.report.inference_tasks == 0);
    CHECK(res.report.proxy_tasks == 0);
}

TEST_CASE("halving and plain modes agree on a clear winner") {
    World w({{"m1", 0.1}, {"m2", 0.35}, {"m3", 0.65}, {"m4", 1.0}});
    ExecOptions plain;
    plain.force_mode = PlanMode::Plain;
    auto p = w.engine->execute(kRace, plain);

    World w2({{"m1", 0.1}, {"m2", 0.35}, {"m3", 0.65}, {"m4", 1.0}});
    ExecOptions sh;
    sh.force_mode = PlanMode::SuccessiveHalving;
    auto s = w2.engine->execute(kRace, sh);

    CHECK(p.ranking == s.ranking);
    REQUIRE(s.report.views.size() == 1);
    const ViewExecution& vx = s.report.views[0];
    CHECK(vx.mode == PlanMode::SuccessiveHalving);
    CHECK(vx.rounds.size() == 2); // ceil(log2 4) rounds for a 4-model race
    CHECK(vx.pulls_used <= minimal_budget(4, 1));
    // Round pulls follow the budget split: r = (1, 2) at B = 8.
    CHECK(vx.rounds[0].pulls == 1);
    CHECK(vx.rounds[1].pulls == 2);
    CHECK(vx.rounds[1].losses.size() == 2);
    CHECK(vx.rounds[1].n_train_used == 300); // final survivors saw everything

    // Chunked prefixes reuse earlier rounds' features: round 1 adds 4 train
    // chunks and 4 test chunks; round 2 extends two survivors by 2 chunks.
    CHECK(s.report.extract_calls == 12);
    CHECK(s.report.proxy_evals == 6);

    // A repeat of the same race answers every round from the store.
    auto s2 = w2.engine->execute(kRace, sh);
    CHECK(s2.ranking == s.ranking);
    CHECK(s2.report.extract_calls == 0);
    CHECK(s2.report.proxy_evals == 0);
    CHECK(s2.report.proxy_hits == 6);
}

TEST_CASE("forcing halving onto an unsuited view warns and runs plain") {
    World w({{"m1", 0.3}, {"m2", 0.8}});
    ExecOptions sh;
    sh.force_mode = PlanMode::SuccessiveHalving;
    auto res = w.engine->execute(
        "SELECT ModelId FROM Models ORDER BY LEEP ASC LIMIT 1 "
        "TESTED ON TestReader TRAINED ON TrainReader",
        sh);
    REQUIRE(res.report.views.size() == 1);
    CHECK(res.report.views[0].mode == PlanMode::Plain);
    REQUIRE(res.report.warnings.size() == 1);
    CHECK(res.report.warnings[0].find("halving") != std::string::npos);
}

TEST_CASE("reader aliases map query names onto catalog readers") {
    World w({{"m1", 0.2}, {"m2", 0.9}});
    MutableReader train = blob_reader("actual_train", 120, 21);
    MutableReader test = blob_reader("actual_test", 80, 22);
    w.catalog.register_reader(record_for(train));
    w.catalog.register_reader(record_for(test));
    w.engine->put_reader(train);
    w.engine->put_reader(test);

    ExecOptions opts;
    opts.reader_aliases = {{"Te", "actual_test"}, {"Tr", "actual_train"}};
    auto res = w.engine->execute(
        "SELECT ModelId FROM Models ORDER BY CosineNN ASC LIMIT 2 "
        "TESTED ON Te TRAINED ON Tr",
        opts);
    CHECK(res.ranking.size() == 2);

    ExecOptions bad;
    bad.reader_aliases = {{"Te", "nope"}, {"Tr", "actual_train"}};
    CHECK_THROWS_AS(w.engine->execute("SELECT ModelId FROM Models "
                                      "ORDER BY CosineNN ASC LIMIT 2 "
                                      "TESTED ON Te TRAINED ON Tr",
                                      bad),
                    Error);
}

TEST_CASE("similarity search plus benchmark join answers a meta query") {
    World w({{"m1", 0.5}, {"m2", 0.5}, {"m3", 0.5}});
    // Three benchmark datasets; db1 shares the query task's distribution.
    MutableReader db1 = blob_reader("db1", 150, 31, 0.0);
    MutableReader db2 = blob_reader("db2", 150, 32, 3.0);
    MutableReader db3 = blob_reader("db3", 150, 33, 6.0);
    for (const auto* r : {&db1, &db2, &db3}) {
        w.catalog.register_reader(record_for(*r, "Benchmark"));
        w.engine->put_reader(*r);
    }
    // Fine-tune results: m2 shines on db1, others elsewhere.
    w.catalog.record_benchmark_result("m1", "db1", 0.70);
    w.catalog.record_benchmark_result("m2", "db1", 0.90);
    w.catalog.record_benchmark_result("m3", "db1", 0.80);
    w.catalog.record_benchmark_result("m3", "db2", 0.95);
    w.catalog.record_benchmark_result("m1", "db3", 0.93);

    const char* q5 =
        "SELECT ModelId FROM Models WHERE "
        "DataReaders.ReaderId IN "
        "(SELECT DataReaderId FROM DataReaders WHERE Type = 'Benchmark' "
        "ORDER BY Task2Vec LIMIT 1 TESTED ON TestReader) Q6 "
        "ORDER BY FineTune LIMIT 1";

    // With the candidates' embeddings stored, only the target needs a task.
    for (const auto* r : {&db1, &db2, &db3})
        w.catalog.embedding_store(r->content_hash(), "moments_v1",
                                  embed_moments(r->materialize()));
    Script script = parse_script(q5);
    auto tr = w.engine->translate(script);
    CHECK(tr.count(TaskKind::DataSim) == 1);
    CHECK(tr.count(TaskKind::Inference) == 0);
    CHECK(tr.count(TaskKind::Proxy) == 0);

    auto res = w.engine->execute(script);
    CHECK(res.ranking == std::vector<std::string>{"m2"});
    CHECK(res.report.datasim_evals == 1); // the query task's own embedding

    // The inner view really did pick the benchmark nearest to the target.
    REQUIRE(res.report.views.size() == 2);
    CHECK(res.report.views[0].method == "Task2Vec");
    CHECK(res.report.views[0].selected == std::vector<std::string>{"db1"});
    CHECK(res.report.views[1].method == "FineTune");
}

TEST_CASE("failing extractor surfaces the task that died") {
    World w({{"m1", 0.5}});
    ModelRecord bad = knob_model("m_bad", 0.5);
    bad.extractor.kind = ExtractorSpec::Kind::Precomputed;
    bad.extractor.precomputed_path = "/nonexistent/features.bin";
    w.catalog.register_model(bad);

    try {
        w.engine->execute(kRace);
        FAIL("expected a task failure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TaskFailed);
        CHECK(std::string(e.what()).find("m_bad") != std::string::npos);
    }
}

TEST_CASE("executions leave a durable, replayable record") {
    TempDir tmp;
    Catalog catalog;
    catalog.attach(tmp.path / "catalog");
    Engine engine(catalog);
    catalog.register_model(knob_model("m1", 0.3));
    catalog.register_model(knob_model("m2", 0.9));
    MutableReader train = blob_reader("TrainReader", 150, 41);
    MutableReader test = blob_reader("TestReader", 100, 42);
    catalog.register_reader(record_for(train));
    catalog.register_reader(record_for(test));
    engine.put_reader(train);
    engine.put_reader(test);

    auto res = engine.execute(kRace);
    const std::string& id = res.report.execution_id;
    CHECK(fs::exists(tmp.path / "catalog" / "executions" / (id + ".json")));

    auto text = engine.record(id);
    REQUIRE(text);
    auto doc = nlohmann::json::parse(*text);
    CHECK(doc["execution_id"] == id);
    CHECK(doc["status"] == "ok");
    CHECK(doc["ranking"].size() == 1);
    CHECK(doc["views"][0]["method"] == "EuclideanNN");
    auto ids = engine.execution_ids();
    CHECK(std::find(ids.begin(), ids.end(), id) != ids.end());

    // Content addressing: same query + same catalog state = same id.
    CHECK(Engine::execution_id(parse_script(kRace), catalog.version(), 0, {}) == id);
}

TEST_CASE("execution ids depend on query, catalog version, and seeds") {
    Script a = parse_script(kRace);
    Script b = parse_script("SELECT ModelId FROM Models ORDER BY CosineNN ASC LIMIT 1 "
                            "TESTED ON TestReader TRAINED ON TrainReader");
    CHECK(Engine::execution_id(a, 1, 0, {}) != Engine::execution_id(b, 1, 0, {}));
    CHECK(Engine::execution_id(a, 1, 0, {}) != Engine::execution_id(a, 2, 0, {}));
    CHECK(Engine::execution_id(a, 1, 0, {}) != Engine::execution_id(a, 1, 5, {}));
    ExecOptions forced;
    forced.force_mode = PlanMode::SuccessiveHalving;
    CHECK(Engine::execution_id(a, 1, 0, {}) != Engine::execution_id(a, 1, 0, forced));
    CHECK(Engine::execution_id(a, 1, 0, {}) == Engine::execution_id(a, 1, 0, {}));
}
