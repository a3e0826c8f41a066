#include "shift/sample_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "shift/errors.hpp"

namespace shift {
namespace {

// The on-disk format is explicitly little-endian; every supported target is
// little-endian, so plain byte copies are fine, but keep the helpers so the
// intent is visible in one place.
template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Cursor {
public:
    Cursor(std::string_view data, std::string context)
        : data_(data), context_(std::move(context)) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > data_.size())
            fail(ErrorCode::CorruptEntry, "truncated " + context_);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void get_bytes(void* dst, size_t n) {
        if (pos_ + n > data_.size())
            fail(ErrorCode::CorruptEntry, "truncated " + context_);
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }

    void expect_end() const {
        if (pos_ != data_.size())
            fail(ErrorCode::CorruptEntry, "trailing bytes in " + context_);
    }

    const std::string& context() const { return context_; }

private:
    std::string_view data_;
    std::string context_;
    size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_header(std::string& out, const SampleSet& samples) {
    out.append("SHFR", 4);
    put<uint16_t>(out, kSampleFileVersion);
    put<uint64_t>(out, samples.size());
    put<uint32_t>(out, uint32_t(samples.dim()));
    put<uint8_t>(out, 0); // label dtype: int32
}

void write_payload(std::string& out, const SampleSet& samples) {
    out.append(reinterpret_cast<const char*>(samples.x.values.data()),
               samples.x.values.size() * sizeof(float));
    out.append(reinterpret_cast<const char*>(samples.y.data()),
               samples.y.size() * sizeof(int32_t));
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

SampleSet read_header_and_payload(Cursor& r, std::vector<uint64_t>* indices) {
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::memcmp(magic, "SHFR", 4) != 0)
        fail(ErrorCode::CorruptEntry, "bad magic in " + r.context());
    uint16_t version = r.get<uint16_t>();
    if (version != kSampleFileVersion)
        fail(ErrorCode::CorruptEntry, "unsupported sample file version " +
                                          std::to_string(version));
    uint64_t n = r.get<uint64_t>();
    uint32_t dim = r.get<uint32_t>();
    uint8_t dtype = r.get<uint8_t>();
    if (dtype != 0)
        fail(ErrorCode::CorruptEntry, "unsupported label dtype " + std::to_string(dtype));

    if (indices) {
        indices->resize(n);
        r.get_bytes(indices->data(), n * sizeof(uint64_t));
    }

    Matrix x(static_cast<size_t>(n), static_cast<size_t>(dim));
    r.get_bytes(x.values.data(), x.values.size() * sizeof(float));
    std::vector<int32_t> y(static_cast<size_t>(n));
    r.get_bytes(y.data(), y.size() * sizeof(int32_t));
    r.expect_end();
    return SampleSet(std::move(x), std::move(y));
}

} // namespace

std::string encode_samples(const SampleSet& samples) {
    std::string out;
    write_header(out, samples);
    write_payload(out, samples);
    return out;
}

SampleSet decode_samples(std::string_view bytes, const std::string& context) {
    Cursor r(bytes, context);
    return read_header_and_payload(r, nullptr);
}

void write_samples(const std::filesystem::path& path, const SampleSet& samples) {
    write_file(path, encode_samples(samples));
}

SampleSet read_samples(const std::filesystem::path& path) {
    return decode_samples(slurp(path), "sample file " + path.string());
}

void write_change_samples(const std::filesystem::path& path,
                          const std::vector<uint64_t>& indices,
                          const SampleSet& samples) {
    if (indices.size() != samples.size())
        fail(ErrorCode::DeltaConflict, "index list length != payload length");
    std::string out;
    write_header(out, samples);
    out.append(reinterpret_cast<const char*>(indices.data()),
               indices.size() * sizeof(uint64_t));
    write_payload(out, samples);
    write_file(path, out);
}

ChangePayload read_change_samples(const std::filesystem::path& path) {
    std::string data = slurp(path);
    Cursor r(data, "sample file " + path.string());
    ChangePayload p;
    p.samples = read_header_and_payload(r, &p.indices);
    return p;
}

} // namespace shift
