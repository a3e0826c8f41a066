#include "shift/catalog.hpp"

#include <fstream>
#include <mutex>

#include <json.hpp>

#include "shift/errors.hpp"

using nlohmann::json;

namespace shift {

const char* to_string(Modality m) { return m == Modality::Vision ? "Vision" : "Text"; }

const char* to_string(ModelSource s) {
    switch (s) {
        case ModelSource::Synthetic: return "synthetic";
        case ModelSource::Exported: return "exported";
        case ModelSource::External: return "external";
    }
    return "synthetic";
}

const char* to_string(ReaderKind k) {
    switch (k) {
        case ReaderKind::Initial: return "initial";
        case ReaderKind::Change: return "change";
        case ReaderKind::Add: return "add";
    }
    return "initial";
}

Modality modality_from_string(const std::string& s) {
    if (s == "Vision") return Modality::Vision;
    if (s == "Text") return Modality::Text;
    fail(ErrorCode::InvalidField, "unknown modality '" + s + "'");
}

ModelSource model_source_from_string(const std::string& s) {
    if (s == "synthetic") return ModelSource::Synthetic;
    if (s == "exported") return ModelSource::Exported;
    if (s == "external") return ModelSource::External;
    fail(ErrorCode::InvalidField, "unknown model source '" + s + "'");
}

ReaderKind reader_kind_from_string(const std::string& s) {
    if (s == "initial") return ReaderKind::Initial;
    if (s == "change") return ReaderKind::Change;
    if (s == "add") return ReaderKind::Add;
    fail(ErrorCode::InvalidField, "unknown reader kind '" + s + "'");
}

namespace {

json spec_to_json(const ExtractorSpec& e) {
    json j;
    switch (e.kind) {
        case ExtractorSpec::Kind::SyntheticProjection: j["kind"] = "synthetic_projection"; break;
        case ExtractorSpec::Kind::Precomputed: j["kind"] = "precomputed"; break;
        case ExtractorSpec::Kind::ExternalHook: j["kind"] = "external_hook"; break;
    }
    j["seed"] = e.seed;
    j["simulated_per_sample_latency"] = e.simulated_per_sample_latency;
    j["quality_knob"] = e.quality_knob;
    j["signal_dims"] = e.signal_dims;
    if (!e.precomputed_path.empty()) j["precomputed_path"] = e.precomputed_path;
    return j;
}

ExtractorSpec spec_from_json(const json& j) {
    ExtractorSpec e;
    std::string kind = j.value("kind", "synthetic_projection");
    if (kind == "synthetic_projection") e.kind = ExtractorSpec::Kind::SyntheticProjection;
    else if (kind == "precomputed") e.kind = ExtractorSpec::Kind::Precomputed;
    else if (kind == "external_hook") e.kind = ExtractorSpec::Kind::ExternalHook;
    else fail(ErrorCode::InvalidField, "unknown extractor kind '" + kind + "'");
    e.seed = j.value("seed", uint64_t(0));
    e.simulated_per_sample_latency = j.value("simulated_per_sample_latency", 0.0);
    e.quality_knob = j.value("quality_knob", 1.0);
    e.signal_dims = j.value("signal_dims", std::vector<uint32_t>{});
    e.precomputed_path = j.value("precomputed_path", std::string{});
    return e;
}

json model_to_json(const ModelRecord& m) {
    json j;
    j["model_id"] = m.model_id;
    j["source"] = to_string(m.source);
    j["input_modality"] = to_string(m.input_modality);
    j["n_params"] = m.n_params;
    if (m.upstream_accuracy) j["upstream_accuracy"] = *m.upstream_accuracy;
    j["feature_dim"] = m.feature_dim;
    j["per_sample_inference_cost"] = m.per_sample_inference_cost;
    j["load_cost"] = m.load_cost;
    j["extractor"] = spec_to_json(m.extractor);
    return j;
}

ModelRecord model_from_json(const json& j) {
    ModelRecord m;
    m.model_id = j.at("model_id").get<std::string>();
    m.source = model_source_from_string(j.value("source", "synthetic"));
    m.input_modality = modality_from_string(j.value("input_modality", "Vision"));
    m.n_params = j.value("n_params", int64_t(0));
    if (j.contains("upstream_accuracy")) m.upstream_accuracy = j["upstream_accuracy"].get<double>();
    m.feature_dim = j.value("feature_dim", uint32_t(0));
    m.per_sample_inference_cost = j.value("per_sample_inference_cost", 0.0);
    m.load_cost = j.value("load_cost", 0.0);
    if (j.contains("extractor")) m.extractor = spec_from_json(j["extractor"]);
    return m;
}

json reader_to_json(const ReaderRecord& r) {
    json j;
    j["reader_id"] = r.reader_id;
    j["modality"] = to_string(r.modality);
    j["n_samples"] = r.n_samples;
    j["label_cardinality"] = r.label_cardinality;
    j["content_hash"] = r.content_hash;
    j["reader_kind"] = to_string(r.reader_kind);
    if (r.parent_reader) j["parent_reader"] = *r.parent_reader;
    if (!r.type_tag.empty()) j["type_tag"] = r.type_tag;
    if (r.embedding) j["embedding"] = *r.embedding;
    return j;
}

ReaderRecord reader_from_json(const json& j) {
    ReaderRecord r;
    r.reader_id = j.at("reader_id").get<std::string>();
    r.modality = modality_from_string(j.value("modality", "Vision"));
    r.n_samples = j.value("n_samples", uint64_t(0));
    r.label_cardinality = j.value("label_cardinality", uint32_t(0));
    r.content_hash = j.value("content_hash", uint64_t(0));
    r.reader_kind = reader_kind_from_string(j.value("reader_kind", "initial"));
    if (j.contains("parent_reader")) r.parent_reader = j["parent_reader"].get<std::string>();
    r.type_tag = j.value("type_tag", std::string{});
    if (j.contains("embedding")) r.embedding = j["embedding"].get<std::vector<double>>();
    return r;
}

json result_to_json(const BenchmarkResult& b) {
    json j;
    j["model_id"] = b.model_id;
    j["reader_id"] = b.reader_id;
    j["accuracy"] = b.accuracy;
    if (b.wall_time) j["wall_time"] = *b.wall_time;
    return j;
}

BenchmarkResult result_from_json(const json& j) {
    BenchmarkResult b;
    b.model_id = j.at("model_id").get<std::string>();
    b.reader_id = j.at("reader_id").get<std::string>();
    b.accuracy = j.at("accuracy").get<double>();
    if (j.contains("wall_time")) b.wall_time = j["wall_time"].get<double>();
    return b;
}

json proxy_entry_to_json(const ProxyCacheKey& k, double value) {
    json j;
    j["model_id"] = k.model_id;
    j["method"] = k.method_signature;
    j["train_hash"] = k.train_hash;
    j["test_hash"] = k.test_hash;
    j["n_train_used"] = k.n_train_used;
    j["value"] = value;
    return j;
}

std::pair<ProxyCacheKey, double> proxy_entry_from_json(const json& j) {
    ProxyCacheKey k;
    k.model_id = j.at("model_id").get<std::string>();
    k.method_signature = j.at("method").get<std::string>();
    k.train_hash = j.at("train_hash").get<uint64_t>();
    k.test_hash = j.at("test_hash").get<uint64_t>();
    k.n_train_used = j.at("n_train_used").get<uint64_t>();
    return {k, j.at("value").get<double>()};
}

void validate_model(const ModelRecord& m) {
    if (m.model_id.empty()) fail(ErrorCode::InvalidField, "empty model_id");
    if (m.feature_dim < 1) fail(ErrorCode::InvalidField, "feature_dim must be >= 1");
    if (m.per_sample_inference_cost <= 0)
        fail(ErrorCode::InvalidField, "per_sample_inference_cost must be > 0");
    if (m.upstream_accuracy && (*m.upstream_accuracy < 0.0 || *m.upstream_accuracy > 1.0))
        fail(ErrorCode::InvalidField, "upstream_accuracy outside [0,1]");
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

json snapshot_to_json(const CatalogData& d) {
    json models = json::array(), readers = json::array(), results = json::array();
    for (const auto& [id, m] : d.models) models.push_back(model_to_json(m));
    for (const auto& [id, r] : d.readers) readers.push_back(reader_to_json(r));
    for (const auto& [key, b] : d.results) results.push_back(result_to_json(b));
    json proxies = json::array();
    for (const auto& [k, v] : d.proxy_values) proxies.push_back(proxy_entry_to_json(k, v));
    json embeddings = json::array();
    for (const auto& [k, v] : d.embeddings)
        embeddings.push_back({{"content_hash", k.first}, {"method", k.second}, {"vector", v}});
    return json{{"models", models},
                {"readers", readers},
                {"results", results},
                {"proxy_values", proxies},
                {"embeddings", embeddings}};
}

void apply_op(CatalogData& d, const json& op) {
    const std::string kind = op.at("op").get<std::string>();
    if (kind == "register_model") {
        ModelRecord m = model_from_json(op.at("record"));
        d.models[m.model_id] = m;
    } else if (kind == "register_reader") {
        ReaderRecord r = reader_from_json(op.at("record"));
        d.readers[r.reader_id] = r;
    } else if (kind == "record_result") {
        BenchmarkResult b = result_from_json(op.at("record"));
        d.results[{b.model_id, b.reader_id}] = b;
    } else if (kind == "proxy_store") {
        auto [k, v] = proxy_entry_from_json(op.at("record"));
        d.proxy_values[k] = v;
    } else if (kind == "embedding_store") {
        const json& r = op.at("record");
        d.embeddings[{r.at("content_hash").get<uint64_t>(),
                      r.at("method").get<std::string>()}] =
            r.at("vector").get<std::vector<double>>();
    } else {
        fail(ErrorCode::CorruptEntry, "unknown catalog log op '" + kind + "'");
    }
}

} // namespace

CatalogView CatalogView::hide_results_for(const std::string& reader_id) const {
    CatalogView v = *this;
    v.hidden_.insert(reader_id);
    return v;
}

std::optional<ModelRecord> CatalogView::model(const std::string& id) const {
    auto it = data_->models.find(id);
    if (it == data_->models.end()) return std::nullopt;
    return it->second;
}

std::optional<ReaderRecord> CatalogView::reader(const std::string& id) const {
    auto it = data_->readers.find(id);
    if (it == data_->readers.end()) return std::nullopt;
    return it->second;
}

std::optional<BenchmarkResult> CatalogView::result(const std::string& model_id,
                                                   const std::string& reader_id) const {
    if (hidden_.count(reader_id)) return std::nullopt;
    auto it = data_->results.find({model_id, reader_id});
    if (it == data_->results.end()) return std::nullopt;
    return it->second;
}

std::vector<ModelRecord> CatalogView::models() const {
    std::vector<ModelRecord> out;
    out.reserve(data_->models.size());
    for (const auto& [id, m] : data_->models) out.push_back(m);
    return out;
}

std::vector<ReaderRecord> CatalogView::readers() const {
    std::vector<ReaderRecord> out;
    out.reserve(data_->readers.size());
    for (const auto& [id, r] : data_->readers) out.push_back(r);
    return out;
}

std::vector<BenchmarkResult> CatalogView::results() const {
    std::vector<BenchmarkResult> out;
    for (const auto& [key, b] : data_->results)
        if (!hidden_.count(b.reader_id)) out.push_back(b);
    return out;
}

Catalog::Catalog() : data_(std::make_shared<CatalogData>()) {}

void Catalog::attach(const std::filesystem::path& dir) {
    std::unique_lock lock(mutex_);
    dir_ = dir;
    std::filesystem::create_directories(dir_);
    if (std::filesystem::exists(dir_ / "manifest.json")) {
        load_from_disk();
    } else {
        write_snapshot_locked();
    }
}

void Catalog::load_from_disk() {
    std::ifstream mf(dir_ / "manifest.json");
    if (!mf) fail(ErrorCode::IoError, "cannot read catalog manifest");
    json manifest = json::parse(mf);
    if (manifest.value("format", "") != "shift-catalog")
        fail(ErrorCode::CorruptEntry, "not a catalog directory: " + dir_.string());
    snapshot_version_ = manifest.value("snapshot_version", uint64_t(0));

    auto data = std::make_shared<CatalogData>();
    std::ifstream sf(dir_ / "snapshot.json");
    if (!sf) fail(ErrorCode::IoError, "cannot read catalog snapshot");
    json snap = json::parse(sf);
    for (const auto& j : snap.value("models", json::array())) {
        ModelRecord m = model_from_json(j);
        data->models[m.model_id] = m;
    }
    for (const auto& j : snap.value("readers", json::array())) {
        ReaderRecord r = reader_from_json(j);
        data->readers[r.reader_id] = r;
    }
    for (const auto& j : snap.value("results", json::array())) {
        BenchmarkResult b = result_from_json(j);
        data->results[{b.model_id, b.reader_id}] = b;
    }
    for (const auto& j : snap.value("proxy_values", json::array())) {
        auto [k, v] = proxy_entry_from_json(j);
        data->proxy_values[k] = v;
    }
    for (const auto& j : snap.value("embeddings", json::array()))
        data->embeddings[{j.at("content_hash").get<uint64_t>(),
                          j.at("method").get<std::string>()}] =
            j.at("vector").get<std::vector<double>>();

    log_entries_ = 0;
    std::ifstream lf(dir_ / "log.jsonl");
    if (lf) {
        std::string line;
        while (std::getline(lf, line)) {
            if (line.empty()) continue;
            apply_op(*data, json::parse(line));
            ++log_entries_;
        }
    }
    data_ = std::move(data);
}

void Catalog::write_snapshot_locked() {
    if (dir_.empty()) return;
    atomic_write(dir_ / "snapshot.json", snapshot_to_json(*data_).dump(2) + "\n");
    json manifest{{"format", "shift-catalog"},
                  {"version", 1},
                  {"snapshot_version", snapshot_version_}};
    atomic_write(dir_ / "manifest.json", manifest.dump(2) + "\n");
    std::ofstream lf(dir_ / "log.jsonl", std::ios::trunc);
}

void Catalog::append_log(const std::string& line) {
    if (dir_.empty()) return;
    std::ofstream lf(dir_ / "log.jsonl", std::ios::app);
    if (!lf) fail(ErrorCode::IoError, "cannot append to catalog log");
    lf << line << "\n";
}

std::string Catalog::register_model(const ModelRecord& record) {
    validate_model(record);
    std::unique_lock lock(mutex_);
    if (data_->models.count(record.model_id))
        fail(ErrorCode::DuplicateId, "model '" + record.model_id + "' already registered");
    auto next = std::make_shared<CatalogData>(*data_);
    next->models[record.model_id] = record;
    data_ = std::move(next);
    ++log_entries_;
    append_log(json{{"op", "register_model"}, {"record", model_to_json(record)}}.dump());
    return record.model_id;
}

void Catalog::register_reader(const ReaderRecord& record) {
    if (record.reader_id.empty()) fail(ErrorCode::InvalidField, "empty reader_id");
    if (record.n_samples < 1) fail(ErrorCode::InvalidField, "reader needs n_samples >= 1");
    std::unique_lock lock(mutex_);
    if (data_->readers.count(record.reader_id))
        fail(ErrorCode::DuplicateId, "reader '" + record.reader_id + "' already registered");
    if (record.reader_kind != ReaderKind::Initial) {
        if (!record.parent_reader || !data_->readers.count(*record.parent_reader))
            fail(ErrorCode::UnknownId, "delta reader requires a registered parent");
    }
    auto next = std::make_shared<CatalogData>(*data_);
    next->readers[record.reader_id] = record;
    data_ = std::move(next);
    ++log_entries_;
    append_log(json{{"op", "register_reader"}, {"record", reader_to_json(record)}}.dump());
}

void Catalog::record_benchmark_result(const std::string& model_id,
                                      const std::string& reader_id, double accuracy,
                                      std::optional<double> wall_time) {
    if (accuracy < 0.0 || accuracy > 1.0)
        fail(ErrorCode::InvalidField, "accuracy outside [0,1]");
    std::unique_lock lock(mutex_);
    if (!data_->models.count(model_id))
        fail(ErrorCode::UnknownId, "unknown model '" + model_id + "'");
    if (!data_->readers.count(reader_id))
        fail(ErrorCode::UnknownId, "unknown reader '" + reader_id + "'");
    BenchmarkResult b{model_id, reader_id, accuracy, wall_time};
    auto next = std::make_shared<CatalogData>(*data_);
    next->results[{model_id, reader_id}] = b;
    data_ = std::move(next);
    ++log_entries_;
    append_log(json{{"op", "record_result"}, {"record", result_to_json(b)}}.dump());
}

void Catalog::proxy_store(const ProxyCacheKey& key, double value) {
    std::unique_lock lock(mutex_);
    auto next = std::make_shared<CatalogData>(*data_);
    next->proxy_values[key] = value;
    data_ = std::move(next);
    ++log_entries_;
    append_log(json{{"op", "proxy_store"}, {"record", proxy_entry_to_json(key, value)}}.dump());
}

std::optional<double> Catalog::proxy_lookup(const ProxyCacheKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = data_->proxy_values.find(key);
    if (it == data_->proxy_values.end()) return std::nullopt;
    return it->second;
}

void Catalog::embedding_store(uint64_t content_hash, const std::string& method,
                              std::vector<double> vec) {
    std::unique_lock lock(mutex_);
    auto next = std::make_shared<CatalogData>(*data_);
    next->embeddings[{content_hash, method}] = vec;
    data_ = std::move(next);
    ++log_entries_;
    append_log(json{{"op", "embedding_store"},
                    {"record",
                     {{"content_hash", content_hash}, {"method", method}, {"vector", vec}}}}
                   .dump());
}

std::optional<std::vector<double>> Catalog::embedding_lookup(
    uint64_t content_hash, const std::string& method) const {
    std::shared_lock lock(mutex_);
    auto it = data_->embeddings.find({content_hash, method});
    if (it == data_->embeddings.end()) return std::nullopt;
    return it->second;
}

CatalogView Catalog::view() const {
    std::shared_lock lock(mutex_);
    return CatalogView(data_);
}

uint64_t Catalog::version() const {
    std::shared_lock lock(mutex_);
    return snapshot_version_ + log_entries_;
}

void Catalog::compact() {
    std::unique_lock lock(mutex_);
    snapshot_version_ += log_entries_;
    log_entries_ = 0;
    write_snapshot_locked();
}

} // namespace shift
