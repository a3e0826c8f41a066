#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "shift/catalog.hpp"
#include "shift/feature_cache.hpp"
#include "shift/optimizer.hpp"
#include "shift/query.hpp"
#include "shift/readers.hpp"
#include "shift/scheduler.hpp"
#include "shift/sql_eval.hpp"

namespace shift {

struct EngineConfig {
    DeviceConfig devices;
    uint64_t seed = 0;
    // Cost-model constants the catalog does not carry per entity.
    double train_load_ms = 0.0;      // fixed cost of opening the train source
    double test_load_ms = 0.0;       // fixed cost of opening the test source
    double proxy_per_sample_ms = 0.01;
    // Feature chunks also go to this directory when set; otherwise they only
    // live in the per-engine memo.
    std::filesystem::path feature_cache_dir;
};

struct ExecOptions {
    // Query-level reader names ("TrainReader") to catalog reader ids. A name
    // that is itself a catalog id needs no entry.
    std::map<std::string, std::string> reader_aliases;
    std::optional<PlanMode> force_mode; // unset = cost-model decision
    std::optional<uint64_t> budget;     // arm pulls for halving
    std::optional<uint64_t> chunk_size; // samples per pull
    std::optional<uint64_t> seed;       // overrides EngineConfig::seed
};

// One scored entity (model for proxy views, reader for similarity views).
// `loss` is the ascending-is-better form every ranking runs on; `value` is the
// method's native output (accuracy, log-likelihood, distance).
struct ScoredEntity {
    std::string id;
    double loss = 0.0;
    double value = 0.0;
    uint64_t n_train_used = 0;
};

struct ViewExecution {
    std::string name;   // alias if the query named the view
    std::string method; // scoring algorithm
    PlanMode mode = PlanMode::Plain;
    std::vector<ScoredEntity> scores;  // best-first
    std::vector<std::string> selected; // after direction and LIMIT
    uint64_t pulls_used = 0;
    uint64_t budget = 0;         // halving: B the race ran under
    uint64_t chunk_size = 0;     // halving: C the train reader was bucketed by
    std::vector<SHRound> rounds; // halving trace when mode ran halving
};

// Per-execution deltas of the engine counters plus the per-view outcomes.
struct ExecutionReport {
    std::string execution_id;
    uint64_t catalog_version = 0;
    double wall_ms = 0.0;
    uint64_t inference_tasks = 0; // scheduled, including cache-satisfied ones
    uint64_t proxy_tasks = 0;
    uint64_t datasim_tasks = 0;
    uint64_t tasks_executed = 0;  // tasks that actually ran work
    uint64_t feature_hits = 0;    // chunk-level feature reuse
    uint64_t feature_misses = 0;
    uint64_t proxy_hits = 0;      // stored proxy values accepted as-is
    uint64_t proxy_misses = 0;
    uint64_t embedding_hits = 0;
    uint64_t embedding_misses = 0;
    uint64_t extract_calls = 0;   // raw extractor invocations
    uint64_t proxy_evals = 0;     // raw proxy computations
    uint64_t datasim_evals = 0;   // raw embedding computations
    std::vector<ViewExecution> views;
    std::vector<std::string> warnings;
};

struct ExecutionResult {
    Table table;
    // ModelId column of the result in row order, deduplicated; empty when the
    // result has no ModelId column.
    std::vector<std::string> ranking;
    ExecutionReport report;
};

// The static plan for a parsed script: every task the current cache state
// still requires, plus which scoring view owns which task range.
struct ViewPlan {
    std::string name;
    std::string method;
    PlanMode mode = PlanMode::Plain; // what the optimizer would run
    size_t first_task = 0;
    size_t n_tasks = 0;
    size_t models_pruned = 0; // model sub-plans dropped for stored proxy values
};

struct TranslationResult {
    TaskPlan plan;
    std::vector<ViewPlan> views;

    size_t count(TaskKind kind) const;
};

// Executes SHiFT-QL scripts against a catalog: pure SQL through SqlEvaluator,
// scoring and similarity views through the task pipeline (feature extraction,
// proxies, dataset embeddings) on the device scheduler, with every level of
// cache consulted before any work is scheduled.
class Engine {
public:
    explicit Engine(Catalog& catalog, EngineConfig config = {});

    // Sample data backing a catalog reader record. The engine keeps the
    // newest reader per id; records stay in the catalog.
    void put_reader(const MutableReader& reader);
    const MutableReader* find_reader(const std::string& reader_id) const;

    ExecutionResult execute(const std::string& text, const ExecOptions& opts = {});
    ExecutionResult execute(const Script& script, const ExecOptions& opts = {});

    TranslationResult translate(const Script& script, const ExecOptions& opts = {});

    // Execution record (JSON text) of a finished execution, if retained.
    std::optional<std::string> record(const std::string& execution_id) const;
    std::vector<std::string> execution_ids() const;

    static std::string execution_id(const Script& script, uint64_t catalog_version,
                                    uint64_t seed, const ExecOptions& opts);

    Catalog& catalog() { return catalog_; }
    const EngineConfig& config() const { return config_; }

private:
    friend struct EngineRun;

    Catalog& catalog_;
    EngineConfig config_;
    FeatureCache disk_cache_;

    mutable std::mutex mu_;
    std::map<std::string, MutableReader> readers_;
    std::map<std::string, std::shared_ptr<const Matrix>> feature_memo_;
    std::map<std::string, std::string> records_;

    struct Counters {
        std::atomic<uint64_t> feature_hits{0}, feature_misses{0};
        std::atomic<uint64_t> proxy_hits{0}, proxy_misses{0};
        std::atomic<uint64_t> embedding_hits{0}, embedding_misses{0};
        std::atomic<uint64_t> extract_calls{0}, proxy_evals{0}, datasim_evals{0};
    } counters_;
};

} // namespace shift
