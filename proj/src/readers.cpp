#include "shift/readers.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "shift/errors.hpp"

namespace shift {

MutableReader::MutableReader(std::string id, SampleSet base)
    : id_(std::move(id)), base_(std::move(base)) {
    if (base_.size() == 0) fail(ErrorCode::InvalidField, "reader needs at least one sample");
    provenance_.reserve(base_.size());
    for (size_t i = 0; i < base_.size(); ++i)
        provenance_.emplace_back(0, uint32_t(i));
}

size_t MutableReader::dim() const { return base_.dim(); }

const SampleSet& MutableReader::source(size_t idx) const {
    return idx == 0 ? base_ : deltas_[idx - 1].payload;
}

MutableReader MutableReader::with_change(SampleSet payload,
                                         std::vector<uint64_t> indices) const {
    if (payload.size() != indices.size())
        fail(ErrorCode::DeltaConflict, "change payload length != index list length");
    if (payload.dim() != dim())
        fail(ErrorCode::DimensionMismatch, "change payload dimension mismatch");
    std::unordered_set<uint64_t> seen;
    for (uint64_t idx : indices) {
        if (idx >= size())
            fail(ErrorCode::DeltaConflict, "change index " + std::to_string(idx) +
                                               " out of range");
        if (!seen.insert(idx).second)
            fail(ErrorCode::DeltaConflict, "duplicate change index " + std::to_string(idx));
    }

    MutableReader next(*this);
    uint32_t src = uint32_t(next.deltas_.size() + 1);
    for (size_t j = 0; j < indices.size(); ++j)
        next.provenance_[size_t(indices[j])] = {src, uint32_t(j)};
    next.deltas_.push_back(Delta{Delta::Kind::Change, std::move(payload),
                                 std::move(indices), {}});
    return next;
}

MutableReader MutableReader::with_add(SampleSet payload,
                                      std::vector<uint64_t> insert_positions) const {
    if (payload.size() != insert_positions.size())
        fail(ErrorCode::DeltaConflict, "add payload length != position list length");
    if (payload.dim() != dim())
        fail(ErrorCode::DimensionMismatch, "add payload dimension mismatch");
    size_t grown = size() + payload.size();
    std::vector<std::pair<uint64_t, uint32_t>> slots; // (final position, payload row)
    slots.reserve(payload.size());
    for (size_t j = 0; j < insert_positions.size(); ++j) {
        if (insert_positions[j] >= grown)
            fail(ErrorCode::DeltaConflict, "insert position out of range");
        slots.emplace_back(insert_positions[j], uint32_t(j));
    }
    std::sort(slots.begin(), slots.end());
    for (size_t j = 1; j < slots.size(); ++j)
        if (slots[j].first == slots[j - 1].first)
            fail(ErrorCode::DeltaConflict, "duplicate insert position");

    MutableReader next(*this);
    uint32_t src = uint32_t(next.deltas_.size() + 1);
    std::vector<std::pair<uint32_t, uint32_t>> prov;
    prov.reserve(grown);
    size_t old_pos = 0, slot = 0;
    for (size_t pos = 0; pos < grown; ++pos) {
        if (slot < slots.size() && slots[slot].first == pos) {
            prov.emplace_back(src, slots[slot].second);
            ++slot;
        } else {
            prov.push_back(provenance_[old_pos++]);
        }
    }
    next.provenance_ = std::move(prov);
    next.deltas_.push_back(Delta{Delta::Kind::Add, std::move(payload), {},
                                 std::move(insert_positions)});
    return next;
}

MutableReader MutableReader::with_add_tail(SampleSet payload) const {
    std::vector<uint64_t> positions(payload.size());
    for (size_t j = 0; j < positions.size(); ++j) positions[j] = size() + j;
    return with_add(std::move(payload), std::move(positions));
}

MutableReader MutableReader::without_last_delta() const {
    if (deltas_.empty()) fail(ErrorCode::OutOfRange, "reader has no deltas");
    MutableReader prior(id_, base_);
    prior.chunk_size_ = chunk_size_;
    for (size_t i = 0; i + 1 < deltas_.size(); ++i) {
        const Delta& d = deltas_[i];
        prior = d.kind == Delta::Kind::Change
                    ? prior.with_change(d.payload, d.indices)
                    : prior.with_add(d.payload, d.insert_positions);
    }
    return prior;
}

SampleSet MutableReader::materialize() const { return materialize(0, size()); }

SampleSet MutableReader::materialize(size_t begin, size_t end) const {
    if (begin > end || end > size())
        fail(ErrorCode::OutOfRange, "materialize range out of bounds");
    Matrix x(end - begin, dim());
    std::vector<int32_t> y(end - begin);
    for (size_t i = begin; i < end; ++i) {
        auto [src, row] = provenance_[i];
        const SampleSet& s = source(src);
        std::copy_n(s.x.row(row), dim(), x.row(i - begin));
        y[i - begin] = s.y[row];
    }
    return SampleSet(std::move(x), std::move(y));
}

std::vector<Chunk> MutableReader::chunk_partition(size_t chunk_size) const {
    if (chunk_size == 0) fail(ErrorCode::OutOfRange, "chunk size must be positive");
    std::vector<Chunk> chunks;
    for (size_t begin = 0, k = 0; begin < size(); begin += chunk_size, ++k) {
        size_t end = std::min(begin + chunk_size, size());
        SampleSet block = materialize(begin, end);
        Chunk c;
        c.reader_id = id_;
        c.ordinal = k;
        c.begin = begin;
        c.end = end;
        c.feature_hash = hash_features(block.x);
        c.content_hash = hash_samples(block);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

uint64_t MutableReader::content_hash() const { return hash_samples(materialize()); }

uint32_t MutableReader::label_cardinality() const {
    std::set<int32_t> labels;
    for (size_t src = 0; src <= deltas_.size(); ++src)
        for (int32_t label : source(src).y) labels.insert(label);
    return uint32_t(labels.size());
}

AddPlan distribute_added_samples(size_t n_buckets, size_t add_count, uint64_t seed) {
    if (n_buckets == 0) fail(ErrorCode::OutOfRange, "need at least one bucket");
    AddPlan plan;
    plan.n_buckets = n_buckets;
    plan.seed = seed;
    plan.per_bucket.assign(n_buckets, add_count / n_buckets);
    size_t extra = add_count % n_buckets;

    Rng rng(derive_seed(seed, "add-distribution"));
    // Buckets taking the extra sample are a random subset; everything else is
    // derived from the same stream so the plan is one function of the seed.
    if (extra > 0) {
        auto lucky = rng.sample_without_replacement(n_buckets, extra);
        for (uint64_t b : lucky) plan.per_bucket[size_t(b)] += 1;
    }

    plan.payload_order.resize(add_count);
    for (size_t i = 0; i < add_count; ++i) plan.payload_order[i] = i;
    rng.shuffle(plan.payload_order);
    return plan;
}

std::vector<uint64_t> add_plan_positions(const AddPlan& plan,
                                         const std::vector<size_t>& bucket_sizes) {
    if (bucket_sizes.size() != plan.n_buckets)
        fail(ErrorCode::ChunkingMismatch, "bucket count does not match plan");
    size_t add_count = 0;
    for (size_t c : plan.per_bucket) add_count += c;

    Rng rng(derive_seed(plan.seed, "add-offsets"));
    std::vector<uint64_t> positions(add_count);
    size_t slot = 0;     // index into payload_order, bucket-major
    size_t base_off = 0; // global offset of current grown bucket
    for (size_t b = 0; b < plan.n_buckets; ++b) {
        size_t k = plan.per_bucket[b];
        size_t grown = bucket_sizes[b] + k;
        // The k new rows take a uniform k-subset of the grown bucket's
        // positions, preserving both original and payload order.
        std::vector<uint64_t> offs;
        if (k > 0) {
            offs = rng.sample_without_replacement(grown, k);
            std::sort(offs.begin(), offs.end());
        }
        for (size_t j = 0; j < k; ++j)
            positions[plan.payload_order[slot++]] = base_off + offs[j];
        base_off += grown;
    }
    return positions;
}

std::vector<size_t> invalidated_chunks(const std::vector<Chunk>& before,
                                       const std::vector<Chunk>& after,
                                       ChunkHashKind kind) {
    if (before.size() != after.size())
        fail(ErrorCode::ChunkingMismatch, "chunk counts differ");
    std::vector<size_t> out;
    for (size_t i = 0; i < before.size(); ++i) {
        if (before[i].size() != after[i].size())
            fail(ErrorCode::ChunkingMismatch, "chunk sizes differ at ordinal " +
                                                  std::to_string(i));
        uint64_t a = kind == ChunkHashKind::Content ? before[i].content_hash
                                                    : before[i].feature_hash;
        uint64_t b = kind == ChunkHashKind::Content ? after[i].content_hash
                                                    : after[i].feature_hash;
        if (a != b) out.push_back(i);
    }
    return out;
}

} // namespace shift
