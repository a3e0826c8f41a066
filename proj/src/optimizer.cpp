#include "shift/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "shift/errors.hpp"

namespace shift {

namespace {

uint32_t ceil_log2(uint64_t m) {
    uint32_t k = 0;
    uint64_t reach = 1;
    while (reach < m) {
        reach *= 2;
        ++k;
    }
    return k;
}

uint64_t ceil_half(uint64_t l) { return (l + 1) / 2; }

} // namespace

uint64_t minimal_budget(uint64_t n_models, uint32_t q) {
    if (n_models < 2) fail(ErrorCode::InvalidPool, "need at least 2 models to race");
    if (q < 1 || uint64_t(q) >= n_models)
        fail(ErrorCode::InvalidPool, "q must satisfy 1 <= q < n_models");
    const uint32_t rounds_k = ceil_log2(n_models);
    // Every round needs floor(B / (L * K)) >= 1, i.e. B >= L * K; walk the
    // actual survivor sizes and take the binding one.
    uint64_t need = 0;
    uint64_t l = n_models;
    while (true) {
        need = std::max(need, l * rounds_k);
        if (ceil_half(l) <= q) break;
        l = ceil_half(l);
    }
    return need;
}

uint64_t minimal_chunk(uint64_t n_train, uint64_t n_models, uint64_t budget) {
    if (n_models < 2) fail(ErrorCode::InvalidPool, "need at least 2 models to race");
    if (n_train < 1) fail(ErrorCode::InvalidPool, "empty train split");
    const uint32_t rounds_k = ceil_log2(n_models);
    uint64_t total_pulls = 0;
    uint64_t l = n_models;
    for (uint32_t j = 0; j < rounds_k; ++j) {
        uint64_t r = budget / (l * rounds_k);
        if (r == 0)
            fail(ErrorCode::BudgetTooSmall,
                 "budget " + std::to_string(budget) + " grants zero pulls at pool size " +
                     std::to_string(l));
        total_pulls += r;
        l = ceil_half(l);
    }
    return (n_train + total_pulls - 1) / total_pulls;
}

SHResult run_successive_halving(const std::vector<std::string>& models,
                                uint64_t n_train_total, const SHConfig& config,
                                const LossFn& loss_of) {
    return run_successive_halving(
        models, n_train_total, config,
        [&](uint32_t, const std::vector<std::string>& survivors, uint64_t n_train) {
            std::vector<double> losses;
            losses.reserve(survivors.size());
            for (const auto& id : survivors) losses.push_back(loss_of(id, n_train));
            return losses;
        });
}

SHResult run_successive_halving(const std::vector<std::string>& models,
                                uint64_t n_train_total, const SHConfig& config,
                                const RoundFn& eval_round) {
    SHResult result;
    if (models.empty()) fail(ErrorCode::InvalidPool, "empty model pool");
    if (models.size() == 1) {
        result.ranking = models;
        return result;
    }
    if (config.chunk_size < 1) fail(ErrorCode::InvalidField, "chunk size must be >= 1");
    if (config.q < 1 || uint64_t(config.q) >= models.size())
        fail(ErrorCode::InvalidPool, "q must satisfy 1 <= q < n_models");

    const uint32_t rounds_k = ceil_log2(models.size());
    std::vector<std::string> survivors = models;
    std::vector<std::vector<std::string>> eliminated_per_round;
    uint64_t cumulative_pulls = 0;

    for (uint32_t k = 0;; ++k) {
        const uint64_t l = survivors.size();
        const uint64_t r_k = config.budget / (l * rounds_k);
        if (r_k == 0)
            fail(ErrorCode::InsufficientBudget,
                 "budget " + std::to_string(config.budget) +
                     " grants zero pulls in round " + std::to_string(k));

        SHRound round;
        round.k = k;
        round.pulls = r_k;
        cumulative_pulls += r_k;
        round.cumulative_samples = config.chunk_size * cumulative_pulls;
        round.n_train_used = std::min(round.cumulative_samples, n_train_total);
        result.pulls_used += l * r_k;

        std::vector<double> losses = eval_round(k, survivors, round.n_train_used);
        if (losses.size() != survivors.size())
            fail(ErrorCode::InvalidField, "round evaluation returned wrong loss count");
        for (size_t i = 0; i < survivors.size(); ++i)
            round.losses.emplace_back(survivors[i], losses[i]);
        std::sort(round.losses.begin(), round.losses.end(),
                  [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second < b.second;
                      return a.first < b.first;
                  });

        const bool out_of_data = round.cumulative_samples >= n_train_total;
        const bool last_round = ceil_half(l) <= config.q;
        round.exhausted = out_of_data && !last_round;
        result.rounds.push_back(round);

        if (last_round || out_of_data) {
            // Ranking: this round's order, then earlier eliminations in
            // reverse round order.
            for (const auto& [id, loss] : round.losses) result.ranking.push_back(id);
            for (auto it = eliminated_per_round.rbegin();
                 it != eliminated_per_round.rend(); ++it)
                result.ranking.insert(result.ranking.end(), it->begin(), it->end());
            return result;
        }

        const uint64_t keep = ceil_half(l);
        survivors.clear();
        std::vector<std::string> dropped;
        for (size_t i = 0; i < round.losses.size(); ++i) {
            if (i < keep) survivors.push_back(round.losses[i].first);
            else dropped.push_back(round.losses[i].first);
        }
        eliminated_per_round.push_back(std::move(dropped));
    }
}

double cost_without_sh(const CostModelParams& p) {
    double total = 0;
    for (const auto& m : p.models)
        total += p.train_load_ms + p.test_load_ms + 2.0 * m.load_ms +
                 m.per_sample_ms * double(p.n_test) + m.per_sample_ms * double(p.n_train) +
                 p.proxy_per_sample_ms * double(p.n_train);
    return total / double(p.parallel_workers);
}

double cost_with_sh(const CostModelParams& p, uint64_t budget, uint64_t chunk_size) {
    const uint64_t m = p.models.size();
    if (m < 2) fail(ErrorCode::InvalidPool, "cost model needs at least 2 models");
    const uint32_t rounds_k = ceil_log2(m);

    // Up-front test inference for every model.
    double total = 0;
    for (const auto& mc : p.models)
        total += mc.load_ms + mc.per_sample_ms * double(p.n_test);
    total /= double(p.parallel_workers);

    // The k-round survivor set is assumed to be the models with the largest
    // per-sample inference time, mirroring the worst case the planner plans for.
    std::vector<ModelCost> by_cost = p.models;
    std::sort(by_cost.begin(), by_cost.end(), [](const ModelCost& a, const ModelCost& b) {
        return a.per_sample_ms > b.per_sample_ms;
    });

    uint64_t survivors = m;
    uint64_t cumulative_pulls = 0;
    for (uint32_t round = 1; round <= rounds_k; ++round) {
        if (round > 1) survivors = ceil_half(survivors);
        const uint64_t r_k = budget / (survivors * rounds_k);
        if (r_k == 0)
            fail(ErrorCode::BudgetTooSmall,
                 "budget grants zero pulls at pool size " + std::to_string(survivors));
        cumulative_pulls += r_k;

        double round_cost = 0;
        for (uint64_t j = 0; j < survivors; ++j) {
            round_cost += by_cost[j].load_ms + p.train_load_ms +
                          by_cost[j].per_sample_ms * double(chunk_size) * double(r_k);
            round_cost += p.test_load_ms +
                          p.proxy_per_sample_ms * double(chunk_size) * double(cumulative_pulls);
        }
        total += round_cost / double(std::min<uint64_t>(p.parallel_workers, survivors));
    }
    return total;
}

const char* to_string(PlanMode mode) {
    return mode == PlanMode::Plain ? "plain" : "successive_halving";
}

PlanMode choose_plan(const CostModelParams& params, uint64_t budget, uint64_t chunk_size) {
    double plain = cost_without_sh(params);
    double sh = cost_with_sh(params, budget, chunk_size);
    return sh < plain ? PlanMode::SuccessiveHalving : PlanMode::Plain;
}

} // namespace shift
