#include "shift/engine.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include <json.hpp>

#include "shift/datasim.hpp"
#include "shift/errors.hpp"
#include "shift/extractors.hpp"
#include "shift/proxies.hpp"

namespace shift {

namespace {

constexpr const char* kEmbedMethod = "moments_v1";

enum class Family { NearestNeighbor, Linear, Leep, FineTune, Similarity };

Family family_of(const std::string& name) {
    if (name == "CosineNN" || name == "EuclideanNN") return Family::NearestNeighbor;
    if (name == "Linear") return Family::Linear;
    if (name == "LEEP") return Family::Leep;
    if (name == "FineTune") return Family::FineTune;
    if (name == "Task2Vec" || name == "MomentsCos") return Family::Similarity;
    fail(ErrorCode::UnknownScoringAlgorithm, "no scoring algorithm named '" + name + "'");
}

// Halving races on losses; accuracies and log-likelihoods flip sign so that
// lower is always better.
double to_loss(Family family, double value) {
    return family == Family::Leep ? -value : 1.0 - value;
}
double from_loss(Family family, double loss) {
    return family == Family::Leep ? -loss : 1.0 - loss;
}

double arg_number(const ScoringCall& call, const std::string& key, double fallback) {
    for (const auto& [k, v] : call.args) {
        if (k != key) continue;
        if (v.kind != Value::Kind::Number)
            fail(ErrorCode::InvalidField,
                 "argument '" + key + "' of " + call.name + " must be a number");
        return v.num;
    }
    return fallback;
}

ProxyRequest to_request(const ScoringCall& call, uint64_t model_seed) {
    ProxyRequest r;
    std::set<std::string> known;
    if (call.name == "CosineNN" || call.name == "EuclideanNN") {
        r.method = call.name == "CosineNN" ? ProxyMethod::CosineNN : ProxyMethod::EuclideanNN;
        r.k = uint32_t(arg_number(call, "k", 1));
        known = {"k"};
    } else if (call.name == "Linear") {
        r.method = ProxyMethod::Linear;
        r.linear.learning_rate = arg_number(call, "lr", 0.1);
        r.linear.l2_regularizer = arg_number(call, "l2", 0.0);
        r.linear.batch_size = uint32_t(arg_number(call, "batch", 32));
        r.linear.epochs = uint32_t(arg_number(call, "epochs", 5));
        r.linear.seed = model_seed;
        known = {"lr", "l2", "batch", "epochs"};
    } else if (call.name == "LEEP") {
        r.method = ProxyMethod::LEEP;
    } else {
        fail(ErrorCode::UnknownScoringAlgorithm,
             "'" + call.name + "' is not a proxy scoring algorithm");
    }
    for (const auto& [k, v] : call.args)
        if (!known.count(k))
            fail(ErrorCode::InvalidField,
                 call.name + " does not take an argument named '" + k + "'");
    return r;
}

SimMetric metric_of(const std::string& name) {
    return name == "Task2Vec" ? SimMetric::AsymmetricCos : SimMetric::Cosine;
}

// Distinct values of a column in first-appearance order.
std::vector<std::string> distinct_column(const Table& t, const std::string& column) {
    int idx = t.column_index(column);
    if (idx < 0)
        fail(ErrorCode::UnknownAttribute,
             "scoring view pool has no '" + column + "' column");
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& row : t.rows) {
        const Value& v = row.values[idx];
        if (v.kind != Value::Kind::Text || !seen.insert(v.text).second) continue;
        out.push_back(v.text);
    }
    return out;
}

// First pool row of each entity, for projecting the selected ids back into a
// result table.
std::map<std::string, size_t> first_row_by(const Table& t, const std::string& column) {
    std::map<std::string, size_t> out;
    int idx = t.column_index(column);
    if (idx < 0) return out;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const Value& v = t.rows[i].values[idx];
        if (v.kind == Value::Kind::Text) out.emplace(v.text, i);
    }
    return out;
}

nlohmann::json value_to_json(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null: return nullptr;
        case Value::Kind::Number: return v.num;
        case Value::Kind::Text: return v.text;
    }
    return nullptr;
}

} // namespace

size_t TranslationResult::count(TaskKind kind) const {
    size_t n = 0;
    for (const auto& t : plan.tasks)
        if (t.kind == kind) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Per-execution state
// ---------------------------------------------------------------------------

// Everything one execute/translate call needs: a catalog snapshot, the SQL
// evaluator wired to the scoring delegate, and the task bookkeeping. In
// plan-only mode tasks accumulate in `global_plan` instead of running; a view
// whose answer is fully cache-resolved still produces its real table, one with
// pending work yields an empty placeholder (enough for the goldens, where
// nothing downstream of an uncomputed score changes the plan).
struct EngineRun {
    Engine& eng;
    CatalogView view;
    ExecOptions opts;
    uint64_t seed;
    bool plan_only = false;

    SqlEvaluator ev;
    ExecutionReport report;
    TaskPlan global_plan;
    std::vector<ViewPlan> view_plans;
    std::set<uint64_t> planned_embeddings; // content hashes with a queued DataSim task
    std::map<std::pair<std::string, size_t>, uint64_t> prefix_hash_memo_;
    std::map<std::pair<std::string, size_t>, std::vector<Chunk>> grids_used;
    int n_anon_views = 0;

    EngineRun(Engine& e, ExecOptions o, bool plan)
        : eng(e), view(e.catalog_.view()), opts(std::move(o)), plan_only(plan), ev(view) {
        seed = opts.seed.value_or(eng.config_.seed);
        ev.set_scoring_delegate([this](const QueryNode& node) { return scoring_view(node); });
    }

    void warn(const std::string& message) { report.warnings.push_back(message); }

    // ---- reader resolution ------------------------------------------------

    std::string resolve_reader_id(const std::string& name) const {
        auto it = opts.reader_aliases.find(name);
        const std::string& id = it == opts.reader_aliases.end() ? name : it->second;
        if (!view.reader(id))
            fail(ErrorCode::UnresolvedReference,
                 it == opts.reader_aliases.end()
                     ? "no data reader named '" + name + "'"
                     : "reader alias '" + name + "' points at unknown reader '" + id + "'");
        return id;
    }

    const MutableReader& reader_data(const std::string& id) const {
        const MutableReader* r = eng.find_reader(id);
        if (!r)
            fail(ErrorCode::UnresolvedReference,
                 "no sample data registered for reader '" + id + "'");
        return *r;
    }

    // Content hash over the first n samples. Keying stored proxy values by the
    // consumed prefix (rather than the whole reader) lets a tail mutation keep
    // every value whose inputs it did not touch.
    uint64_t prefix_hash(const MutableReader& reader, size_t n) {
        n = std::min(n, reader.size());
        auto key = std::make_pair(reader.id(), n);
        auto it = prefix_hash_memo_.find(key);
        if (it != prefix_hash_memo_.end()) return it->second;
        uint64_t h = hash_samples(reader.materialize(0, n));
        prefix_hash_memo_.emplace(key, h);
        return h;
    }

    // ---- feature pipeline -------------------------------------------------

    static std::string memo_key(const std::string& model_id, uint64_t feature_hash) {
        return model_id + "\x1f" + hex64(feature_hash);
    }

    std::shared_ptr<const Matrix> probe_features(const std::string& model_id,
                                                 const Chunk& chunk) {
        const std::string key = memo_key(model_id, chunk.feature_hash);
        {
            std::lock_guard<std::mutex> lock(eng.mu_);
            auto it = eng.feature_memo_.find(key);
            if (it != eng.feature_memo_.end()) return it->second;
        }
        if (auto m = eng.disk_cache_.get(model_id, chunk.feature_hash)) {
            auto ptr = std::make_shared<const Matrix>(std::move(*m));
            std::lock_guard<std::mutex> lock(eng.mu_);
            eng.feature_memo_.emplace(key, ptr);
            return ptr;
        }
        return nullptr;
    }

    std::shared_ptr<const Matrix> compute_features(const ModelRecord& model,
                                                   const MutableReader& reader,
                                                   const Chunk& chunk) {
        const std::string key = memo_key(model.model_id, chunk.feature_hash);
        {
            // A parallel task may have raced us to the same content.
            std::lock_guard<std::mutex> lock(eng.mu_);
            auto it = eng.feature_memo_.find(key);
            if (it != eng.feature_memo_.end()) return it->second;
        }
        SampleSet slice = reader.materialize(chunk.begin, chunk.end);
        eng.counters_.extract_calls.fetch_add(1);
        Matrix features = extract_features(model, slice.x, chunk.begin);
        auto ptr = std::make_shared<const Matrix>(std::move(features));
        eng.disk_cache_.put(model.model_id, chunk.feature_hash, *ptr);
        std::lock_guard<std::mutex> lock(eng.mu_);
        eng.feature_memo_.emplace(key, ptr);
        return ptr;
    }

    std::shared_ptr<const Matrix> features_now(const ModelRecord& model,
                                               const MutableReader& reader,
                                               const Chunk& chunk) {
        if (auto hit = probe_features(model.model_id, chunk)) return hit;
        return compute_features(model, reader, chunk);
    }

    // Chunk grid of a reader: its own grid when it declares one, otherwise
    // `fallback` samples per chunk. Grids are logged so the execution record
    // can carry the chunk hashes a later run diffs against.
    std::vector<Chunk> grid(const MutableReader& reader, size_t fallback) {
        size_t size = reader.chunk_size().value_or(fallback);
        if (size == 0) size = std::max<size_t>(reader.size(), 1);
        std::vector<Chunk> chunks = reader.chunk_partition(size);
        grids_used[{reader.id(), size}] = chunks;
        return chunks;
    }

    // Near-equal split for plain full-reader inference.
    size_t balance_chunk_size(size_t n) const {
        const DeviceConfig& d = eng.config_.devices;
        size_t devices = d.accelerator_count() > 0 ? d.accelerator_count() : d.cpu_workers;
        size_t parts = partition_for_balance(n, devices, d.partition_threshold).size();
        return (n + parts - 1) / parts;
    }

    // Feature matrix over the first n samples of a reader, stitched from the
    // chunk grid (every chunk is already in the memo by the time this runs).
    SampleSet assemble(const ModelRecord& model, const MutableReader& reader,
                       const std::vector<Chunk>& chunks, size_t n) {
        Matrix x(n, model.feature_dim);
        for (const auto& c : chunks) {
            if (c.begin >= n) break;
            auto feats = features_now(model, reader, c);
            size_t take = std::min(n, c.end) - c.begin;
            std::copy_n(feats->values.begin(), take * feats->cols,
                        x.values.begin() + c.begin * x.cols);
        }
        SampleSet labels = reader.materialize(0, n);
        return SampleSet(std::move(x), std::move(labels.y));
    }

    // ---- task plan building ----------------------------------------------

    // Inference tasks for the first n samples of one (model, reader) pair.
    // Cache-satisfied chunks become instant no-work tasks, so the plan always
    // shows the full dependency shape.
    std::vector<size_t> add_inference_tasks(TaskPlan& plan, const ModelRecord& model,
                                            const MutableReader& reader,
                                            const std::vector<Chunk>& chunks, size_t n,
                                            double source_load_ms) {
        std::vector<size_t> ids;
        for (const auto& c : chunks) {
            if (c.begin >= n) break;
            Task t;
            t.kind = TaskKind::Inference;
            t.label = "infer:" + model.model_id + ":" + reader.id() + "[" +
                      std::to_string(c.begin) + "," + std::to_string(c.end) + ")";
            t.cost_ms = model.per_sample_inference_cost * double(c.size()) +
                        (c.ordinal == 0 ? model.load_cost + source_load_ms : 0.0);
            if (probe_features(model.model_id, c)) {
                eng.counters_.feature_hits.fetch_add(1);
                t.cached = true;
                t.cost_ms = 0.0;
            } else {
                eng.counters_.feature_misses.fetch_add(1);
                ModelRecord m = model;
                const MutableReader* rp = &reader;
                Chunk chunk = c;
                t.work = [this, m, rp, chunk] { compute_features(m, *rp, chunk); };
            }
            ids.push_back(plan.add(std::move(t)));
            ++report.inference_tasks;
        }
        return ids;
    }

    struct ProxyJob {
        std::string model_id;
        ProxyCacheKey key;
        std::optional<double> value; // already known (stored) or filled after the run
    };

    // One model's sub-plan for a proxy evaluation at n_train samples: nothing
    // at all when the value is stored, otherwise train+test inference feeding
    // a proxy task.
    ProxyJob add_model_subplan(TaskPlan& plan, const ModelRecord& model,
                               const ScoringCall& call, const MutableReader& train,
                               const MutableReader& test,
                               const std::vector<Chunk>& train_grid,
                               const std::vector<Chunk>& test_grid, size_t n_train) {
        ProxyRequest request = to_request(call, derive_seed(seed, model.model_id));
        ProxyJob job;
        job.model_id = model.model_id;
        job.key = ProxyCacheKey{model.model_id, method_signature(request),
                                prefix_hash(train, n_train),
                                prefix_hash(test, test.size()), uint64_t(n_train)};
        if (auto stored = eng.catalog_.proxy_lookup(job.key)) {
            eng.counters_.proxy_hits.fetch_add(1);
            job.value = *stored;
            return job;
        }
        eng.counters_.proxy_misses.fetch_add(1);

        std::vector<size_t> deps =
            add_inference_tasks(plan, model, train, train_grid, n_train,
                                eng.config_.train_load_ms);
        std::vector<size_t> test_deps =
            add_inference_tasks(plan, model, test, test_grid, test.size(),
                                eng.config_.test_load_ms);
        deps.insert(deps.end(), test_deps.begin(), test_deps.end());

        Task t;
        t.kind = TaskKind::Proxy;
        t.label = "proxy:" + model.model_id + ":" + call.name + "@" + std::to_string(n_train);
        t.cost_ms = eng.config_.proxy_per_sample_ms * double(n_train) +
                    eng.config_.test_load_ms;
        t.deps = std::move(deps);
        ProxyCacheKey key = job.key;
        ModelRecord m = model;
        const MutableReader* trp = &train;
        const MutableReader* tep = &test;
        const std::vector<Chunk>* tg = &train_grid;
        const std::vector<Chunk>* eg = &test_grid;
        t.work = [this, key, m, call, trp, tep, tg, eg, n_train, request] {
            SampleSet tr = assemble(m, *trp, *tg, n_train);
            SampleSet te = assemble(m, *tep, *eg, tep->size());
            eng.counters_.proxy_evals.fetch_add(1);
            double value = compute_proxy(tr, te, request);
            eng.catalog_.proxy_store(key, value);
        };
        plan.add(std::move(t));
        ++report.proxy_tasks;
        return job;
    }

    // Runs (or, in plan-only mode, records) a view's tasks. Returns false when
    // the answer cannot be computed because pending work was only planned.
    bool dispatch(TaskPlan& local, ViewPlan& vp) {
        vp.n_tasks += local.size();
        if (plan_only) {
            const size_t base = global_plan.size();
            bool pending = false;
            for (Task& t : local.tasks) {
                for (size_t& d : t.deps) d += base;
                pending |= !t.cached;
                // The closures reference state of this call; the returned plan
                // is for inspection and simulation only.
                t.work = nullptr;
                global_plan.add(std::move(t));
            }
            local.tasks.clear();
            return !pending;
        }
        if (local.size() == 0) return true;
        RunReport run = run_threaded(local, eng.config_.devices);
        for (size_t i = 0; i < local.size(); ++i)
            if (!local.tasks[i].cached && run.tasks[i].status == TaskStatus::Done)
                ++report.tasks_executed;
        if (!run.ok()) {
            for (size_t i = 0; i < run.tasks.size(); ++i) {
                const TaskTiming& t = run.tasks[i];
                if (t.status == TaskStatus::Failed && t.error != "dependency failed")
                    fail(ErrorCode::TaskFailed,
                         "task '" + local.tasks[i].label + "' failed: " + t.error);
            }
            fail(ErrorCode::TaskFailed, "task plan failed");
        }
        local.tasks.clear();
        return true;
    }

    // ---- scoring views ----------------------------------------------------

    Table scoring_view(const QueryNode& node) {
        const ScoringCall& call = *node.scoring;
        Family family = family_of(call.name);
        Table pool = ev.eval_pool(node);

        ViewExecution vx;
        vx.name = node.alias.empty()
                      ? "scoring_view_" + std::to_string(++n_anon_views)
                      : node.alias;
        vx.method = call.name;

        ViewPlan vp;
        vp.name = vx.name;
        vp.method = call.name;
        vp.first_task = global_plan.size();

        Table out;
        switch (family) {
            case Family::Similarity:
                out = similarity_view(node, pool, vx, vp);
                break;
            case Family::FineTune:
                out = finetune_view(node, pool, vx, vp);
                break;
            default:
                out = proxy_view(node, pool, family, vx, vp);
                break;
        }
        report.views.push_back(std::move(vx));
        view_plans.push_back(std::move(vp));
        return out;
    }

    // Shared tail: order by loss ascending (ties by id), apply the direction
    // and LIMIT, and project the chosen entities' first pool rows.
    Table select_ranked(const QueryNode& node, const Table& pool,
                        const std::string& id_column, ViewExecution& vx,
                        std::vector<std::string> ranking) {
        if (node.has_dir && node.order_desc)
            std::reverse(ranking.begin(), ranking.end());
        if (node.limit && *node.limit < ranking.size()) ranking.resize(*node.limit);
        vx.selected = ranking;

        auto first_row = first_row_by(pool, id_column);
        std::vector<size_t> rows;
        for (const auto& id : ranking) {
            auto it = first_row.find(id);
            if (it != first_row.end()) rows.push_back(it->second);
        }
        return project_rows(pool, rows, node.select_list);
    }

    static void sort_scores(std::vector<ScoredEntity>& scores) {
        std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
            if (a.loss != b.loss) return a.loss < b.loss;
            return a.id < b.id;
        });
    }

    Table placeholder(const QueryNode& node, const Table& pool) {
        return project_rows(pool, {}, node.select_list);
    }

    // ---- proxies (task-aware views) ---------------------------------------

    Table proxy_view(const QueryNode& node, const Table& pool, Family family,
                     ViewExecution& vx, ViewPlan& vp) {
        std::vector<std::string> model_ids = distinct_column(pool, "ModelId");
        std::sort(model_ids.begin(), model_ids.end());
        if (model_ids.empty()) {
            vp.mode = vx.mode = PlanMode::Plain;
            return placeholder(node, pool);
        }
        std::vector<ModelRecord> models;
        for (const auto& id : model_ids) {
            auto m = view.model(id);
            if (!m)
                fail(ErrorCode::UnresolvedReference,
                     "scoring view pool names unknown model '" + id + "'");
            models.push_back(std::move(*m));
        }

        if (node.trained_on.empty() || node.tested_on.empty())
            fail(ErrorCode::InvalidField,
                 call_label(node) + " needs TRAINED ON and TESTED ON readers");
        const MutableReader& train = reader_data(resolve_reader_id(node.trained_on));
        const MutableReader& test = reader_data(resolve_reader_id(node.tested_on));
        const size_t n_train = train.size();
        if (n_train == 0 || test.size() == 0)
            fail(ErrorCode::EmptySplit, "scoring readers must be non-empty");

        // Budget / chunk / mode. Halving races accuracies only, needs at least
        // two contenders, and must eliminate someone to pay off.
        const uint64_t q =
            std::clamp<uint64_t>(node.limit.value_or(1), 1,
                                 models.size() > 1 ? models.size() - 1 : 1);
        bool sh_capable = family != Family::Leep && models.size() >= 2 &&
                          node.limit && *node.limit < models.size();
        uint64_t budget = 0, chunk = 0;
        PlanMode mode = PlanMode::Plain;
        if (sh_capable) {
            budget = opts.budget.value_or(minimal_budget(models.size(), uint32_t(q)));
            chunk = opts.chunk_size.value_or(covering_chunk(n_train, models.size(), budget, q));
            CostModelParams params = cost_params(models, n_train, test.size());
            mode = opts.force_mode.value_or(choose_plan(params, budget, chunk));
        } else if (opts.force_mode == PlanMode::SuccessiveHalving) {
            warn("successive halving does not apply to " + call_label(node) +
                 "; running the plain plan");
        }
        vp.mode = vx.mode = mode;

        // Translation always lays out the plain shape; the halving path
        // re-plans round by round during execution.
        if (plan_only || mode == PlanMode::Plain)
            return plain_proxy(node, pool, family, models, train, test, vx, vp);
        return halving_proxy(node, pool, family, models, train, test,
                             SHConfig{budget, chunk, uint32_t(q), seed}, vx, vp);
    }

    std::string call_label(const QueryNode& node) const {
        return "scoring view '" + node.scoring->name + "'";
    }

    CostModelParams cost_params(const std::vector<ModelRecord>& models, size_t n_train,
                                size_t n_test) const {
        const DeviceConfig& d = eng.config_.devices;
        CostModelParams p;
        p.parallel_workers =
            uint32_t(d.accelerator_count() > 0 ? d.accelerator_count() : d.cpu_workers);
        for (const auto& m : models)
            p.models.push_back({m.load_cost, m.per_sample_inference_cost});
        p.n_train = n_train;
        p.n_test = n_test;
        p.train_load_ms = eng.config_.train_load_ms;
        p.test_load_ms = eng.config_.test_load_ms;
        p.proxy_per_sample_ms = eng.config_.proxy_per_sample_ms;
        return p;
    }

    // Least chunk size whose pulls cover the train set over the rounds a
    // top-q race actually runs (for q=1 this equals the library's minimal
    // chunk; larger q stops earlier, so covering needs a bigger chunk).
    static uint64_t covering_chunk(uint64_t n_train, uint64_t n_models, uint64_t budget,
                                   uint64_t q) {
        uint32_t rounds_k = 0;
        for (uint64_t reach = 1; reach < n_models; reach *= 2) ++rounds_k;
        uint64_t total = 0, l = n_models;
        while (true) {
            uint64_t r = budget / (l * rounds_k);
            if (r == 0)
                fail(ErrorCode::BudgetTooSmall,
                     "budget grants zero pulls at pool size " + std::to_string(l));
            total += r;
            uint64_t keep = (l + 1) / 2;
            if (keep <= q) break;
            l = keep;
        }
        return (n_train + total - 1) / total;
    }

    Table plain_proxy(const QueryNode& node, const Table& pool, Family family,
                      const std::vector<ModelRecord>& models, const MutableReader& train,
                      const MutableReader& test, ViewExecution& vx, ViewPlan& vp) {
        std::vector<Chunk> train_grid = grid(train, balance_chunk_size(train.size()));
        std::vector<Chunk> test_grid = grid(test, balance_chunk_size(test.size()));

        TaskPlan local;
        std::vector<ProxyJob> jobs;
        for (const auto& m : models) {
            jobs.push_back(add_model_subplan(local, m, *node.scoring, train, test,
                                             train_grid, test_grid, train.size()));
            if (jobs.back().value) ++vp.models_pruned;
        }
        if (!dispatch(local, vp)) return placeholder(node, pool);

        for (auto& job : jobs) {
            if (!job.value) job.value = eng.catalog_.proxy_lookup(job.key);
            if (!job.value)
                fail(ErrorCode::TaskFailed,
                     "proxy value for '" + job.model_id + "' missing after run");
            vx.scores.push_back({job.model_id, to_loss(family, *job.value), *job.value,
                                 uint64_t(train.size())});
        }
        sort_scores(vx.scores);
        std::vector<std::string> ranking;
        for (const auto& s : vx.scores) ranking.push_back(s.id);
        return select_ranked(node, pool, "ModelId", vx, std::move(ranking));
    }

    Table halving_proxy(const QueryNode& node, const Table& pool, Family family,
                        const std::vector<ModelRecord>& models, const MutableReader& train,
                        const MutableReader& test, const SHConfig& config,
                        ViewExecution& vx, ViewPlan& vp) {
        std::vector<Chunk> train_grid = grid(train, config.chunk_size);
        std::vector<Chunk> test_grid = grid(test, balance_chunk_size(test.size()));
        vx.budget = config.budget;
        vx.chunk_size = train_grid.empty() ? config.chunk_size : train_grid[0].size();
        std::map<std::string, const ModelRecord*> by_id;
        for (const auto& m : models) by_id[m.model_id] = &m;

        std::vector<std::string> ids;
        for (const auto& m : models) ids.push_back(m.model_id);

        // One scheduler batch per round; returning the losses is the barrier.
        auto eval_round = [&](uint32_t, const std::vector<std::string>& survivors,
                              uint64_t n_train) {
            TaskPlan local;
            std::vector<ProxyJob> jobs;
            for (const auto& id : survivors)
                jobs.push_back(add_model_subplan(local, *by_id.at(id), *node.scoring,
                                                 train, test, train_grid, test_grid,
                                                 size_t(n_train)));
            dispatch(local, vp);
            std::vector<double> losses;
            for (auto& job : jobs) {
                if (!job.value) job.value = eng.catalog_.proxy_lookup(job.key);
                if (!job.value)
                    fail(ErrorCode::TaskFailed,
                         "proxy value for '" + job.model_id + "' missing after run");
                losses.push_back(to_loss(family, *job.value));
            }
            return losses;
        };

        SHResult race = run_successive_halving(ids, train.size(), config, eval_round);
        vx.pulls_used = race.pulls_used;
        vx.rounds = race.rounds;

        // Last-known loss per model, from the round it last appeared in.
        std::map<std::string, std::pair<double, uint64_t>> last;
        for (const auto& round : race.rounds)
            for (const auto& [id, loss] : round.losses)
                last[id] = {loss, round.n_train_used};
        for (const auto& id : race.ranking) {
            auto [loss, n] = last.at(id);
            vx.scores.push_back({id, loss, from_loss(family, loss), n});
        }
        return select_ranked(node, pool, "ModelId", vx, race.ranking);
    }

    // ---- dataset similarity views -----------------------------------------

    struct EmbeddingRef {
        std::string reader_id;
        std::optional<std::vector<double>> vec;
    };

    // Embedding of a reader: the record's own vector, then the computed-
    // embedding table, then a DataSim task (at most one per content hash).
    EmbeddingRef embedding_for(TaskPlan& plan, const std::string& reader_id) {
        EmbeddingRef ref{reader_id, std::nullopt};
        ReaderRecord rec = *view.reader(reader_id);
        if (rec.embedding) {
            eng.counters_.embedding_hits.fetch_add(1);
            ref.vec = rec.embedding;
            return ref;
        }
        if (auto stored = eng.catalog_.embedding_lookup(rec.content_hash, kEmbedMethod)) {
            eng.counters_.embedding_hits.fetch_add(1);
            ref.vec = std::move(*stored);
            return ref;
        }
        eng.counters_.embedding_misses.fetch_add(1);
        if (!planned_embeddings.insert(rec.content_hash).second) return ref;
        const MutableReader& data = reader_data(reader_id);
        Task t;
        t.kind = TaskKind::DataSim;
        t.label = "datasim:" + reader_id;
        t.cost_ms = eng.config_.proxy_per_sample_ms * double(data.size());
        uint64_t hash = rec.content_hash;
        const MutableReader* rp = &data;
        t.work = [this, hash, rp] {
            eng.counters_.datasim_evals.fetch_add(1);
            eng.catalog_.embedding_store(hash, kEmbedMethod, embed_moments(rp->materialize()));
        };
        plan.add(std::move(t));
        ++report.datasim_tasks;
        return ref;
    }

    Table similarity_view(const QueryNode& node, const Table& pool, ViewExecution& vx,
                          ViewPlan& vp) {
        vp.mode = vx.mode = PlanMode::Plain;
        if (node.tested_against.empty())
            fail(ErrorCode::InvalidField,
                 "similarity view needs a TESTED ON / TESTED AGAINST target");
        const std::string target_id = resolve_reader_id(node.tested_against);

        std::vector<std::string> candidates = distinct_column(pool, "DataReaderId");
        std::sort(candidates.begin(), candidates.end());
        // Readers scoped out of the current view (held-out benchmark targets)
        // never count as candidate tasks.
        candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                        [&](const std::string& id) {
                                            return view.hidden(id);
                                        }),
                         candidates.end());

        TaskPlan local;
        EmbeddingRef target = embedding_for(local, target_id);
        std::vector<EmbeddingRef> refs;
        for (const auto& id : candidates) refs.push_back(embedding_for(local, id));
        if (!dispatch(local, vp)) return placeholder(node, pool);

        auto resolved = [&](EmbeddingRef& ref) {
            if (!ref.vec) {
                ReaderRecord rec = *view.reader(ref.reader_id);
                ref.vec = eng.catalog_.embedding_lookup(rec.content_hash, kEmbedMethod);
            }
            if (!ref.vec)
                fail(ErrorCode::TaskFailed,
                     "embedding for '" + ref.reader_id + "' missing after run");
            return *ref.vec;
        };
        std::vector<double> target_vec = resolved(target);
        std::vector<std::pair<std::string, std::vector<double>>> cands;
        for (auto& r : refs) cands.emplace_back(r.reader_id, resolved(r));

        auto ranked = rank_datasets(target_vec, cands, metric_of(node.scoring->name),
                                    cands.size());
        for (const auto& r : ranked)
            vx.scores.push_back({r.reader_id, r.distance, r.distance, 0});
        std::vector<std::string> ranking;
        for (const auto& r : ranked) ranking.push_back(r.reader_id);
        return select_ranked(node, pool, "DataReaderId", vx, std::move(ranking));
    }

    // ---- meta-learned views -----------------------------------------------

    // Benchmark-accuracy ranking. With a TESTED ON target the engine finds
    // the nearest benchmark dataset itself (skipping, with a warning, nearest
    // candidates nobody in the pool has results on); without one the pool must
    // already join in an Accuracy column, and each model takes its best.
    Table finetune_view(const QueryNode& node, const Table& pool, ViewExecution& vx,
                        ViewPlan& vp) {
        vp.mode = vx.mode = PlanMode::Plain;
        std::vector<std::string> model_ids = distinct_column(pool, "ModelId");
        std::sort(model_ids.begin(), model_ids.end());
        if (model_ids.empty()) return placeholder(node, pool);

        std::map<std::string, double> accuracy;
        if (!node.tested_on.empty()) {
            if (!nearest_accuracies(node, model_ids, accuracy, vp))
                return placeholder(node, pool);
        } else {
            int acc_idx = pool.column_index("Accuracy");
            if (acc_idx < 0)
                fail(ErrorCode::NoResultsForTarget,
                     "fine-tune view has no benchmark accuracies in scope; give it a "
                     "TESTED ON target or join benchmark results");
            int id_idx = pool.column_index("ModelId");
            for (const auto& row : pool.rows) {
                const Value& id = row.values[id_idx];
                const Value& acc = row.values[acc_idx];
                if (id.kind != Value::Kind::Text || acc.kind != Value::Kind::Number)
                    continue;
                auto [it, fresh] = accuracy.emplace(id.text, acc.num);
                if (!fresh) it->second = std::max(it->second, acc.num);
            }
        }

        for (const auto& id : model_ids) {
            auto it = accuracy.find(id);
            if (it == accuracy.end()) {
                warn("model '" + id + "' has no usable fine-tune result; dropped from " +
                     call_label(node));
                continue;
            }
            vx.scores.push_back({id, 1.0 - it->second, it->second, 0});
        }
        sort_scores(vx.scores);
        std::vector<std::string> ranking;
        for (const auto& s : vx.scores) ranking.push_back(s.id);
        return select_ranked(node, pool, "ModelId", vx, std::move(ranking));
    }

    // Fills accuracy with each pool model's result on the nearest benchmark
    // dataset. Candidates are the datasets with visible results (the target
    // itself may be one; with its own rows hidden, as in a hold-out, it never
    // appears). Returns false in plan-only mode when embeddings still need
    // computing.
    bool nearest_accuracies(const QueryNode& node, const std::vector<std::string>& models,
                            std::map<std::string, double>& accuracy, ViewPlan& vp) {
        const std::string target_id = resolve_reader_id(node.tested_on);
        std::set<std::string> with_results;
        for (const auto& r : view.results()) with_results.insert(r.reader_id);

        TaskPlan local;
        EmbeddingRef target = embedding_for(local, target_id);
        std::vector<EmbeddingRef> refs;
        for (const auto& id : with_results)
            if (id != target_id) refs.push_back(embedding_for(local, id));
        if (!dispatch(local, vp)) return false;

        auto resolved = [&](EmbeddingRef& ref) -> std::vector<double> {
            if (!ref.vec) {
                ReaderRecord rec = *view.reader(ref.reader_id);
                ref.vec = eng.catalog_.embedding_lookup(rec.content_hash, kEmbedMethod);
            }
            if (!ref.vec)
                fail(ErrorCode::TaskFailed,
                     "embedding for '" + ref.reader_id + "' missing after run");
            return *ref.vec;
        };
        std::vector<double> target_vec = resolved(target);
        std::vector<std::pair<std::string, std::vector<double>>> cands;
        for (auto& r : refs) cands.emplace_back(r.reader_id, resolved(r));
        if (with_results.count(target_id)) cands.emplace_back(target_id, target_vec);
        auto ranked = rank_datasets(target_vec, cands, SimMetric::AsymmetricCos,
                                    cands.size());
        if (ranked.empty())
            fail(ErrorCode::NoResultsForTarget,
                 "no benchmark dataset available to stand in for '" + target_id + "'");

        for (const auto& r : ranked) {
            for (const auto& id : models)
                if (auto res = view.result(id, r.reader_id))
                    accuracy.emplace(id, res->accuracy);
            if (!accuracy.empty()) {
                if (r.reader_id != ranked.front().reader_id)
                    warn("nearest dataset '" + ranked.front().reader_id +
                         "' has no results for this pool; using '" + r.reader_id + "'");
                return true;
            }
        }
        fail(ErrorCode::NoResultsForTarget,
             "no benchmark dataset has results for this model pool");
    }
};

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

Engine::Engine(Catalog& catalog, EngineConfig config)
    : catalog_(catalog), config_(std::move(config)),
      disk_cache_(config_.feature_cache_dir.empty()
                      ? FeatureCache()
                      : FeatureCache(config_.feature_cache_dir)) {
    if (config_.devices.cpu_workers == 0)
        fail(ErrorCode::ConfigError, "cpu_workers must be positive");
}

void Engine::put_reader(const MutableReader& reader) {
    std::lock_guard<std::mutex> lock(mu_);
    readers_.insert_or_assign(reader.id(), reader);
}

const MutableReader* Engine::find_reader(const std::string& reader_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = readers_.find(reader_id);
    return it == readers_.end() ? nullptr : &it->second;
}

std::string Engine::execution_id(const Script& script, uint64_t catalog_version,
                                 uint64_t seed, const ExecOptions& opts) {
    Hasher64 h;
    h.update_str(pretty_print(script));
    h.update_u64(catalog_version);
    h.update_u64(seed);
    h.update_u64(opts.force_mode ? 1 + uint64_t(*opts.force_mode) : 0);
    h.update_u64(opts.budget.value_or(0));
    h.update_u64(opts.chunk_size.value_or(0));
    for (const auto& [k, v] : opts.reader_aliases) {
        h.update_str(k);
        h.update_str(v);
    }
    return hex64(h.digest());
}

ExecutionResult Engine::execute(const std::string& text, const ExecOptions& opts) {
    return execute(parse_script(text), opts);
}

namespace {

void fill_counter_diff(ExecutionReport& report, const ExecutionReport& before) {
    report.feature_hits -= before.feature_hits;
    report.feature_misses -= before.feature_misses;
    report.proxy_hits -= before.proxy_hits;
    report.proxy_misses -= before.proxy_misses;
    report.embedding_hits -= before.embedding_hits;
    report.embedding_misses -= before.embedding_misses;
    report.extract_calls -= before.extract_calls;
    report.proxy_evals -= before.proxy_evals;
    report.datasim_evals -= before.datasim_evals;
}

} // namespace

ExecutionResult Engine::execute(const Script& script, const ExecOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    EngineRun run(*this, opts, /*plan_only=*/false);

    ExecutionReport before;
    before.feature_hits = counters_.feature_hits.load();
    before.feature_misses = counters_.feature_misses.load();
    before.proxy_hits = counters_.proxy_hits.load();
    before.proxy_misses = counters_.proxy_misses.load();
    before.embedding_hits = counters_.embedding_hits.load();
    before.embedding_misses = counters_.embedding_misses.load();
    before.extract_calls = counters_.extract_calls.load();
    before.proxy_evals = counters_.proxy_evals.load();
    before.datasim_evals = counters_.datasim_evals.load();

    ExecutionResult result;
    result.table = run.ev.eval_script(script);
    result.report = std::move(run.report);

    result.report.catalog_version = catalog_.version();
    result.report.execution_id =
        execution_id(script, result.report.catalog_version, run.seed, opts);
    result.report.feature_hits = counters_.feature_hits.load();
    result.report.feature_misses = counters_.feature_misses.load();
    result.report.proxy_hits = counters_.proxy_hits.load();
    result.report.proxy_misses = counters_.proxy_misses.load();
    result.report.embedding_hits = counters_.embedding_hits.load();
    result.report.embedding_misses = counters_.embedding_misses.load();
    result.report.extract_calls = counters_.extract_calls.load();
    result.report.proxy_evals = counters_.proxy_evals.load();
    result.report.datasim_evals = counters_.datasim_evals.load();
    fill_counter_diff(result.report, before);

    int id_idx = result.table.column_index("ModelId");
    if (id_idx >= 0) {
        std::set<std::string> seen;
        for (const auto& row : result.table.rows) {
            const Value& v = row.values[id_idx];
            if (v.kind == Value::Kind::Text && seen.insert(v.text).second)
                result.ranking.push_back(v.text);
        }
    }

    result.report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    // Durable record: enough to replay the query and audit what ran.
    nlohmann::json rec;
    rec["execution_id"] = result.report.execution_id;
    rec["query"] = pretty_print(script);
    rec["catalog_version"] = result.report.catalog_version;
    rec["seed"] = run.seed;
    nlohmann::json jopts;
    if (opts.force_mode) jopts["force_mode"] = to_string(*opts.force_mode);
    if (opts.budget) jopts["budget"] = *opts.budget;
    if (opts.chunk_size) jopts["chunk_size"] = *opts.chunk_size;
    if (!opts.reader_aliases.empty()) jopts["reader_aliases"] = opts.reader_aliases;
    rec["options"] = std::move(jopts);
    rec["ranking"] = result.ranking;
    rec["columns"] = result.table.columns;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : result.table.rows) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row.values) r.push_back(value_to_json(v));
        rows.push_back(std::move(r));
    }
    rec["rows"] = std::move(rows);
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : result.report.views) {
        nlohmann::json jv;
        jv["name"] = v.name;
        jv["method"] = v.method;
        jv["mode"] = to_string(v.mode);
        jv["selected"] = v.selected;
        jv["pulls_used"] = v.pulls_used;
        if (v.mode == PlanMode::SuccessiveHalving) {
            jv["budget"] = v.budget;
            jv["chunk_size"] = v.chunk_size;
            nlohmann::json rounds = nlohmann::json::array();
            for (const auto& r : v.rounds) {
                nlohmann::json jr;
                jr["k"] = r.k;
                jr["pulls"] = r.pulls;
                jr["n_train_used"] = r.n_train_used;
                nlohmann::json losses = nlohmann::json::array();
                for (const auto& [id, loss] : r.losses)
                    losses.push_back({{"id", id}, {"loss", loss}});
                jr["losses"] = std::move(losses);
                rounds.push_back(std::move(jr));
            }
            jv["rounds"] = std::move(rounds);
        }
        nlohmann::json scores = nlohmann::json::array();
        for (const auto& s : v.scores)
            scores.push_back({{"id", s.id},
                              {"loss", s.loss},
                              {"value", s.value},
                              {"n_train_used", s.n_train_used}});
        jv["scores"] = std::move(scores);
        views.push_back(std::move(jv));
    }
    rec["views"] = std::move(views);
    nlohmann::json readers = nlohmann::json::array();
    for (const auto& [key, chunks] : run.grids_used) {
        nlohmann::json jr;
        jr["reader_id"] = key.first;
        jr["chunk_size"] = key.second;
        nlohmann::json jc = nlohmann::json::array();
        for (const auto& c : chunks)
            jc.push_back({{"ordinal", c.ordinal},
                          {"begin", c.begin},
                          {"end", c.end},
                          {"feature_hash", hex64(c.feature_hash)},
                          {"content_hash", hex64(c.content_hash)}});
        jr["chunks"] = std::move(jc);
        readers.push_back(std::move(jr));
    }
    rec["readers"] = std::move(readers);
    rec["counters"] = {{"inference_tasks", result.report.inference_tasks},
                       {"proxy_tasks", result.report.proxy_tasks},
                       {"datasim_tasks", result.report.datasim_tasks},
                       {"tasks_executed", result.report.tasks_executed},
                       {"feature_hits", result.report.feature_hits},
                       {"feature_misses", result.report.feature_misses},
                       {"proxy_hits", result.report.proxy_hits},
                       {"proxy_misses", result.report.proxy_misses},
                       {"extract_calls", result.report.extract_calls},
                       {"proxy_evals", result.report.proxy_evals}};
    rec["warnings"] = result.report.warnings;
    rec["wall_ms"] = result.report.wall_ms;
    rec["status"] = "ok";

    const std::string text = rec.dump(2);
    {
        std::lock_guard<std::mutex> lock(mu_);
        records_[result.report.execution_id] = text;
    }
    if (catalog_.attached()) {
        std::filesystem::path dir = catalog_.dir() / "executions";
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / (result.report.execution_id + ".json"),
                          std::ios::binary | std::ios::trunc);
        out << text << '\n';
        if (!out) fail(ErrorCode::IoError, "failed to write execution record");
    }
    return result;
}

TranslationResult Engine::translate(const Script& script, const ExecOptions& opts) {
    EngineRun run(*this, opts, /*plan_only=*/true);
    run.ev.eval_script(script);
    TranslationResult out;
    out.plan = std::move(run.global_plan);
    out.views = std::move(run.view_plans);
    return out;
}

std::optional<std::string> Engine::record(const std::string& execution_id) const {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = records_.find(execution_id);
        if (it != records_.end()) return it->second;
    }
    if (catalog_.attached()) {
        std::filesystem::path file =
            catalog_.dir() / "executions" / (execution_id + ".json");
        std::ifstream in(file, std::ios::binary);
        if (in) {
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            return text;
        }
    }
    return std::nullopt;
}

std::vector<std::string> Engine::execution_ids() const {
    std::vector<std::string> out;
    {
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& [id, _] : records_) out.push_back(id);
    }
    if (catalog_.attached()) {
        std::filesystem::path dir = catalog_.dir() / "executions";
        if (std::filesystem::exists(dir))
            for (const auto& entry : std::filesystem::directory_iterator(dir))
                if (entry.path().extension() == ".json")
                    out.push_back(entry.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace shift
