#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "shift/extractor_spec.hpp"

namespace shift {

enum class Modality { Vision, Text };
enum class ModelSource { Synthetic, Exported, External };
enum class ReaderKind { Initial, Change, Add };

const char* to_string(Modality m);
const char* to_string(ModelSource s);
const char* to_string(ReaderKind k);
Modality modality_from_string(const std::string& s);
ModelSource model_source_from_string(const std::string& s);
ReaderKind reader_kind_from_string(const std::string& s);

struct ModelRecord {
    std::string model_id;
    ModelSource source = ModelSource::Synthetic;
    Modality input_modality = Modality::Vision;
    int64_t n_params = 0;
    std::optional<double> upstream_accuracy; // in [0,1] when present
    uint32_t feature_dim = 0;
    double per_sample_inference_cost = 0.0; // ms per sample
    double load_cost = 0.0;                 // ms
    ExtractorSpec extractor;
};

struct ReaderRecord {
    std::string reader_id;
    Modality modality = Modality::Vision;
    uint64_t n_samples = 0;
    uint32_t label_cardinality = 0;
    uint64_t content_hash = 0;
    ReaderKind reader_kind = ReaderKind::Initial;
    std::optional<std::string> parent_reader;
    std::string type_tag; // free-form, e.g. "Structured"
    // Externally supplied embedding, if any; computed embeddings live in the
    // content-addressed embedding table instead.
    std::optional<std::vector<double>> embedding;
};

struct BenchmarkResult {
    std::string model_id;
    std::string reader_id;
    double accuracy = 0.0;
    std::optional<double> wall_time; // seconds
};

// Everything a proxy computation depends on; two computations with equal keys
// produce equal values, so the stored value can stand in for the computation.
struct ProxyCacheKey {
    std::string model_id;
    std::string method_signature; // canonical method + hyperparameters
    uint64_t train_hash = 0;
    uint64_t test_hash = 0;
    uint64_t n_train_used = 0;

    auto operator<=>(const ProxyCacheKey&) const = default;
};

struct CatalogData {
    std::map<std::string, ModelRecord> models;
    std::map<std::string, ReaderRecord> readers;
    std::map<std::pair<std::string, std::string>, BenchmarkResult> results;
    std::map<ProxyCacheKey, double> proxy_values;
    // (reader content hash, embedding method) -> embedding vector
    std::map<std::pair<uint64_t, std::string>, std::vector<double>> embeddings;
};

// Read view over a catalog state: an immutable snapshot plus an optional set
// of readers whose benchmark rows are hidden (leave-one-dataset-out scoping).
// Cheap to copy; safe to share across threads.
class CatalogView {
public:
    CatalogView() : data_(std::make_shared<CatalogData>()) {}
    explicit CatalogView(std::shared_ptr<const CatalogData> data)
        : data_(std::move(data)) {}

    CatalogView hide_results_for(const std::string& reader_id) const;
    bool hidden(const std::string& reader_id) const { return hidden_.count(reader_id) > 0; }

    std::optional<ModelRecord> model(const std::string& id) const;
    std::optional<ReaderRecord> reader(const std::string& id) const;
    std::optional<BenchmarkResult> result(const std::string& model_id,
                                          const std::string& reader_id) const;
    std::vector<ModelRecord> models() const;
    std::vector<ReaderRecord> readers() const;
    std::vector<BenchmarkResult> results() const;

    const CatalogData& data() const { return *data_; }

private:
    std::shared_ptr<const CatalogData> data_;
    std::set<std::string> hidden_;
};

// The durable store behind the three relational views plus the proxy-value
// and embedding tables. Many readers, one logical writer; reads run against
// an immutable snapshot swapped atomically on every write.
//
// On disk: <dir>/manifest.json (format tag + snapshot version),
// <dir>/snapshot.json (full state), <dir>/log.jsonl (operations appended
// since the snapshot). Version = snapshot version + log length; compact()
// folds the log into a fresh snapshot.
class Catalog {
public:
    Catalog();

    void attach(const std::filesystem::path& dir); // open or create
    bool attached() const { return !dir_.empty(); }
    const std::filesystem::path& dir() const { return dir_; }

    std::string register_model(const ModelRecord& record);
    void register_reader(const ReaderRecord& record);
    void record_benchmark_result(const std::string& model_id,
                                 const std::string& reader_id, double accuracy,
                                 std::optional<double> wall_time = std::nullopt);

    void proxy_store(const ProxyCacheKey& key, double value);
    std::optional<double> proxy_lookup(const ProxyCacheKey& key) const;
    void embedding_store(uint64_t content_hash, const std::string& method,
                         std::vector<double> vec);
    std::optional<std::vector<double>> embedding_lookup(uint64_t content_hash,
                                                        const std::string& method) const;

    CatalogView view() const;
    uint64_t version() const;

    void compact();

private:
    void append_log(const std::string& line);
    void load_from_disk();
    void write_snapshot_locked();

    mutable std::shared_mutex mutex_;
    std::shared_ptr<const CatalogData> data_;
    uint64_t snapshot_version_ = 0;
    uint64_t log_entries_ = 0;
    std::filesystem::path dir_;
};

} // namespace shift
