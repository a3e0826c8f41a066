#include "shift/incremental.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "shift/errors.hpp"

namespace shift {

size_t SHState::total_samples() const {
    return std::accumulate(bucket_sizes.begin(), bucket_sizes.end(), size_t(0));
}

AddReaderUpdate apply_add_reader_sh(const SHState& prior, size_t add_count,
                                    uint64_t seed) {
    if (prior.bucket_sizes.empty())
        fail(ErrorCode::InvalidField, "prior halving state has no buckets");
    AddReaderUpdate out;
    const size_t nb = prior.bucket_sizes.size();
    out.plan = distribute_added_samples(nb, add_count, seed);
    out.insert_positions = add_plan_positions(out.plan, prior.bucket_sizes);
    out.bucket_sizes = prior.bucket_sizes;
    for (size_t i = 0; i < nb; ++i) {
        out.bucket_sizes[i] += out.plan.per_bucket[i];
        if (out.plan.per_bucket[i] > 0) out.affected_buckets.push_back(i);
    }

    // Round k consumed the first sum(pulls through k) buckets; the earliest
    // round whose prefix covers a grown bucket is where replay must start.
    out.replay_from_round = uint32_t(prior.trace.rounds.size());
    if (!out.affected_buckets.empty()) {
        uint64_t consumed = 0;
        for (size_t k = 0; k < prior.trace.rounds.size(); ++k) {
            consumed += prior.trace.rounds[k].pulls;
            if (consumed > out.affected_buckets.front()) {
                out.replay_from_round = uint32_t(k);
                break;
            }
        }
    }
    return out;
}

namespace {

uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

// Content diff that also covers reshaped grids (an append grows the last
// chunk and adds new ones); aligned grids go through invalidated_chunks.
std::vector<size_t> changed_ordinals(const std::vector<Chunk>& before,
                                     const std::vector<Chunk>& after) {
    bool aligned = before.size() == after.size();
    for (size_t i = 0; aligned && i < before.size(); ++i)
        aligned = before[i].size() == after[i].size();
    if (aligned) return invalidated_chunks(before, after, ChunkHashKind::Content);

    std::vector<size_t> out;
    const size_t common = std::min(before.size(), after.size());
    for (size_t i = 0; i < common; ++i)
        if (before[i].size() != after[i].size() ||
            before[i].content_hash != after[i].content_hash)
            out.push_back(i);
    for (size_t i = common; i < std::max(before.size(), after.size()); ++i)
        out.push_back(i);
    return out;
}

std::vector<Chunk> chunks_from_record(const nlohmann::json& entry) {
    std::vector<Chunk> out;
    for (const auto& jc : entry.at("chunks")) {
        Chunk c;
        c.reader_id = entry.at("reader_id").get<std::string>();
        c.ordinal = jc.at("ordinal").get<size_t>();
        c.begin = jc.at("begin").get<size_t>();
        c.end = jc.at("end").get<size_t>();
        c.feature_hash = parse_hex64(jc.at("feature_hash").get<std::string>());
        c.content_hash = parse_hex64(jc.at("content_hash").get<std::string>());
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace

IncrementalResult incremental_execute(Engine& engine, const Script& script,
                                      const std::string& prior_execution_id,
                                      const ExecOptions& caller_opts) {
    IncrementalResult out;
    ExecOptions opts = caller_opts;

    auto warn = [&](std::string message) {
        out.incremental.warnings.push_back(std::move(message));
    };

    auto text = engine.record(prior_execution_id);
    if (!text) {
        out.incremental.full_rerun = true;
        warn("no record of execution '" + prior_execution_id +
             "'; running from scratch");
        out.execution = engine.execute(script, opts);
        return out;
    }
    nlohmann::json rec = nlohmann::json::parse(*text);

    // Pin the prior run's knobs unless the caller overrode them.
    if (!opts.seed && rec.contains("seed")) opts.seed = rec["seed"].get<uint64_t>();
    if (rec.contains("options")) {
        const auto& jopts = rec["options"];
        if (!opts.force_mode && jopts.contains("force_mode"))
            opts.force_mode = jopts["force_mode"] == "successive_halving"
                                  ? PlanMode::SuccessiveHalving
                                  : PlanMode::Plain;
        if (!opts.budget && jopts.contains("budget"))
            opts.budget = jopts["budget"].get<uint64_t>();
        if (!opts.chunk_size && jopts.contains("chunk_size"))
            opts.chunk_size = jopts["chunk_size"].get<uint64_t>();
        if (opts.reader_aliases.empty() && jopts.contains("reader_aliases"))
            opts.reader_aliases =
                jopts["reader_aliases"].get<std::map<std::string, std::string>>();
    }

    // Plan-mode pin. One halving view pins its mode, budget, and bucket
    // capacity exactly; all-plain records pin plain. A mix cannot be pinned
    // by a global switch, so the optimizer re-decides (and is only free to
    // diverge if the catalog shifted its cost inputs).
    if (!opts.force_mode && rec.contains("views")) {
        std::vector<const nlohmann::json*> halving;
        for (const auto& v : rec["views"])
            if (v.value("mode", "") == "successive_halving") halving.push_back(&v);
        if (halving.empty()) {
            opts.force_mode = PlanMode::Plain;
        } else if (halving.size() == 1 && rec["views"].size() == 1) {
            opts.force_mode = PlanMode::SuccessiveHalving;
            const auto& v = *halving.front();
            if (!opts.budget && v.contains("budget"))
                opts.budget = v["budget"].get<uint64_t>();
            if (!opts.chunk_size && v.contains("chunk_size"))
                opts.chunk_size = v["chunk_size"].get<uint64_t>();
        } else {
            warn("prior run mixed plan modes across views; the optimizer "
                 "re-decides per view");
        }
    }

    // Diff the recorded chunk grids against the readers as they stand now.
    if (!rec.contains("readers") || !rec["readers"].is_array() ||
        rec["readers"].empty()) {
        out.incremental.full_rerun = true;
        warn("prior record carries no chunk hashes; cache reuse cannot be "
             "tracked, running full");
    } else {
        for (const auto& entry : rec["readers"]) {
            const std::string rid = entry.at("reader_id").get<std::string>();
            const MutableReader* now = engine.find_reader(rid);
            if (!now) {
                out.incremental.full_rerun = true;
                warn("reader '" + rid +
                     "' from the prior record has no sample data; running full");
                continue;
            }
            std::vector<Chunk> before = chunks_from_record(entry);
            const size_t csize =
                now->chunk_size().value_or(entry.at("chunk_size").get<size_t>());
            std::vector<Chunk> after = now->chunk_partition(csize);
            std::vector<size_t> changed = changed_ordinals(before, after);
            auto& slot = out.incremental.changed_chunks[rid];
            slot.insert(slot.end(), changed.begin(), changed.end());
            std::sort(slot.begin(), slot.end());
            slot.erase(std::unique(slot.begin(), slot.end()), slot.end());
        }
    }

    out.execution = engine.execute(script, opts);
    return out;
}

} // namespace shift
