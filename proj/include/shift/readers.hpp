#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shift/data.hpp"

namespace shift {

// One replacement or append step applied to a reader.
// Replacement ("change") deltas carry the target positions, one per payload
// row, interpreted against the reader state after all preceding deltas.
// Append ("add") deltas carry the final position of each payload row in the
// grown reader, so position N..N+k-1 is a plain tail append.
struct Delta {
    enum class Kind { Change, Add };
    Kind kind;
    SampleSet payload;
    std::vector<uint64_t> indices;          // change: one target index per row
    std::vector<uint64_t> insert_positions; // add: final position per row
};

struct Chunk {
    std::string reader_id;
    size_t ordinal = 0;
    size_t begin = 0;
    size_t end = 0;               // half-open sample range
    uint64_t feature_hash = 0;    // over feature bytes only
    uint64_t content_hash = 0;    // over features and labels
    size_t size() const { return end - begin; }
};

// A base sample block plus an ordered delta list, materialized lazily.
// Construction resolves every sample position to its (source, row) origin
// once; materialization then just gathers rows. Readers are immutable —
// applying a delta yields a new reader sharing nothing mutable.
class MutableReader {
public:
    MutableReader() = default;
    MutableReader(std::string id, SampleSet base);

    const std::string& id() const { return id_; }
    size_t size() const { return provenance_.size(); }
    size_t dim() const;
    const std::vector<Delta>& deltas() const { return deltas_; }
    std::optional<size_t> chunk_size() const { return chunk_size_; }
    void set_chunk_size(std::optional<size_t> c) { chunk_size_ = c; }

    MutableReader with_change(SampleSet payload, std::vector<uint64_t> indices) const;
    MutableReader with_add(SampleSet payload, std::vector<uint64_t> insert_positions) const;
    MutableReader with_add_tail(SampleSet payload) const;
    // Reader state before the last delta; used to reuse per-chunk work across
    // an append.
    MutableReader without_last_delta() const;

    SampleSet materialize() const;
    SampleSet materialize(size_t begin, size_t end) const;

    std::vector<Chunk> chunk_partition(size_t chunk_size) const;
    uint64_t content_hash() const; // whole-reader, features and labels

    // Origin of each sample position: (source, row) with source 0 = base and
    // source 1+i = payload of delta i.
    std::pair<size_t, size_t> origin(size_t position) const { return provenance_[position]; }

    uint32_t label_cardinality() const;

private:
    const SampleSet& source(size_t idx) const;

    std::string id_;
    SampleSet base_;
    std::vector<Delta> deltas_;
    std::vector<std::pair<uint32_t, uint32_t>> provenance_;
    std::optional<size_t> chunk_size_;
};

// Uniform distribution of appended samples over the existing chunk grid.
// Counts per bucket differ by at most one; which buckets take an extra
// sample, which payload row lands in which bucket, and the position inside a
// bucket are all drawn from the seed. Within-bucket positions depend on the
// actual bucket sizes and are resolved by add_plan_positions.
struct AddPlan {
    size_t n_buckets = 0;
    uint64_t seed = 0;
    std::vector<size_t> per_bucket;    // appended count per bucket
    std::vector<size_t> payload_order; // payload row fed to each slot, bucket-major
};

AddPlan distribute_added_samples(size_t n_buckets, size_t add_count, uint64_t seed);

// Turns a plan into the final insert position of every payload row (the form
// Delta expects), given the original bucket sizes (last bucket may be short).
std::vector<uint64_t> add_plan_positions(const AddPlan& plan,
                                         const std::vector<size_t>& bucket_sizes);

enum class ChunkHashKind { Content, Feature };

// Ordinals of chunks whose hash differs between the two partitions.
std::vector<size_t> invalidated_chunks(const std::vector<Chunk>& before,
                                       const std::vector<Chunk>& after,
                                       ChunkHashKind kind = ChunkHashKind::Content);

} // namespace shift
