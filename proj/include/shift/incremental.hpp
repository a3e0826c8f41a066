#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shift/engine.hpp"
#include "shift/optimizer.hpp"
#include "shift/readers.hpp"

namespace shift {

// Bucket layout and trace of one halving race, reconstructed from an
// execution record or assembled directly.
struct SHState {
    uint64_t budget = 0;
    uint64_t chunk_size = 0;          // capacity C of a full bucket
    std::vector<size_t> bucket_sizes; // actual sizes; the last may run short
    SHResult trace;

    size_t total_samples() const;
};

// How an append folds into an existing bucket layout, and how much of the
// prior halving trace stays valid.
struct AddReaderUpdate {
    AddPlan plan;                           // seeded per-bucket growth
    std::vector<uint64_t> insert_positions; // final row positions, Delta form
    std::vector<size_t> bucket_sizes;       // layout after the add
    std::vector<size_t> affected_buckets;   // buckets that gained rows
    // First round whose consumed prefix gained samples. Equals the trace
    // length when no round's prefix was touched (nothing to replay).
    uint32_t replay_from_round = 0;
};

// Spreads `add_count` appended samples uniformly over the prior buckets —
// all of them, including buckets already consumed by eliminated models — and
// works out the earliest round whose inputs the append changes. Appending at
// the tail instead would hide the new samples from every round that decided
// an elimination, freezing the race's verdict on stale data.
AddReaderUpdate apply_add_reader_sh(const SHState& prior, size_t add_count,
                                    uint64_t seed);

struct IncrementalReport {
    // Per reader: ordinals of chunks whose content differs from the prior
    // run's recorded grid.
    std::map<std::string, std::vector<size_t>> changed_chunks;
    bool full_rerun = false; // prior record unusable; ran without reuse claims
    std::vector<std::string> warnings;
};

struct IncrementalResult {
    ExecutionResult execution;
    IncrementalReport incremental;
};

// Re-runs a recorded query after reader mutations. Seed, plan mode, budget
// and bucket capacity are pinned from the prior execution record, so the
// result equals a from-scratch run of the same plan on the mutated readers
// while everything the mutation left untouched resolves from the caches.
// A missing or grid-less prior record degrades to a plain full execution
// with a warning.
IncrementalResult incremental_execute(Engine& engine, const Script& script,
                                      const std::string& prior_execution_id,
                                      const ExecOptions& opts = {});

} // namespace shift
