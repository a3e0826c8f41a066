#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace shift {

// ---------------------------------------------------------------------------
// Successive halving
// ---------------------------------------------------------------------------

struct SHConfig {
    uint64_t budget = 0;     // B: total arm pulls available
    uint64_t chunk_size = 0; // C: train samples per pull
    uint32_t q = 1;          // how many winners the caller wants
    uint64_t seed = 0;
};

struct SHRound {
    uint32_t k = 0;
    uint64_t pulls = 0;              // r_k granted to each survivor this round
    uint64_t cumulative_samples = 0; // R_k = C * sum of pulls so far (unclamped)
    uint64_t n_train_used = 0;       // min(R_k, N): what models actually saw
    // Models evaluated this round, ascending (loss, model_id).
    std::vector<std::pair<std::string, double>> losses;
    bool exhausted = false; // train data ran out; the algorithm stopped here
};

struct SHResult {
    // Full ranking: final-round order first, then models eliminated in later
    // rounds before earlier ones, each block in its round's loss order.
    std::vector<std::string> ranking;
    std::vector<SHRound> rounds;
    uint64_t pulls_used = 0;
};

// Loss for one model after seeing n_train training samples. Lower is better;
// the engine maps accuracies to 1 - accuracy and LEEP scores to their
// negation before handing the callback over.
using LossFn = std::function<double(const std::string& model_id, uint64_t n_train)>;

// Batched form: losses for every survivor of one round, aligned with the
// survivor list. Lets the caller run a whole round as one scheduler batch and
// treat the return as the round barrier.
using RoundFn = std::function<std::vector<double>(
    uint32_t round, const std::vector<std::string>& survivors, uint64_t n_train)>;

// Least budget keeping every round's per-model pull count >= 1, by direct
// evaluation of the round schedule.
uint64_t minimal_budget(uint64_t n_models, uint32_t q = 1);

// Least chunk size under which the surviving model has processed the whole
// train set by the last round.
uint64_t minimal_chunk(uint64_t n_train, uint64_t n_models, uint64_t budget);

SHResult run_successive_halving(const std::vector<std::string>& models,
                                uint64_t n_train_total, const SHConfig& config,
                                const LossFn& loss_of);
SHResult run_successive_halving(const std::vector<std::string>& models,
                                uint64_t n_train_total, const SHConfig& config,
                                const RoundFn& eval_round);

// ---------------------------------------------------------------------------
// Analytic cost model
// ---------------------------------------------------------------------------

struct ModelCost {
    double load_ms = 0.0;       // L_i
    double per_sample_ms = 0.0; // I_i; inference time assumed linear in samples
};

struct CostModelParams {
    uint32_t parallel_workers = 1; // P
    std::vector<ModelCost> models;
    uint64_t n_train = 0;          // N
    uint64_t n_test = 0;           // O
    double train_load_ms = 0.0;    // T_N
    double test_load_ms = 0.0;     // T_O
    double proxy_per_sample_ms = 0.0; // E_Proxy
};

double cost_without_sh(const CostModelParams& params);
double cost_with_sh(const CostModelParams& params, uint64_t budget, uint64_t chunk_size);

enum class PlanMode { Plain, SuccessiveHalving };
const char* to_string(PlanMode mode);

// Cheaper of the two analytic costs; ties go to the simpler Plain plan.
PlanMode choose_plan(const CostModelParams& params, uint64_t budget, uint64_t chunk_size);

} // namespace shift
