#include "seedlab/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace seedlab::num {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated at byte " +
                                                                        std::to_string(pos_));
        }
    }
    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == in_.size(); }

private:
    const std::vector<std::uint8_t>& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params, const CheckpointHeader& header) {
    Writer w;
    w.bytes("SEDL");
    w.u8(kCheckpointVersion);
    w.u8(header.student ? 1 : 0);
    for (float r : header.guidance_range) w.f32(r);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (ParamId i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        const Shape& shape = params.value(i).shape();
        w.u8(static_cast<std::uint8_t>(shape.size()));
        for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
    }
    for (ParamId i = 0; i < params.size(); ++i) {
        for (double v : params.value(i).data()) w.f32(static_cast<float>(v));
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "SEDL", 4) != 0) {
        throw CheckpointError(CheckpointError::Kind::bad_magic, "checkpoint has bad magic (expected SEDL)");
    }
    r.str(4);
    const std::uint8_t version = r.u8();
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "checkpoint version " + std::to_string(version) + " unsupported");
    }
    Checkpoint ck;
    const std::uint8_t flags = r.u8();
    if (flags & ~1u) throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint has unknown flags");
    ck.header.student = (flags & 1u) != 0;
    for (float& v : ck.header.guidance_range) v = r.f32();

    const std::uint32_t count = r.u32();
    std::vector<std::pair<std::string, Shape>> table;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u16());
        const std::uint8_t rank = r.u8();
        if (rank == 0) throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint tensor of rank 0");
        Shape shape(rank);
        for (auto& d : shape) {
            d = r.u32();
            if (d == 0) throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint zero dimension");
        }
        table.emplace_back(std::move(name), std::move(shape));
    }
    for (auto& [name, shape] : table) {
        const std::size_t n = shape_numel(shape);
        r.need(n * 4);
        std::vector<double> data(n);
        for (auto& v : data) v = r.f32();
        if (ck.params.contains(name)) {
            throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint duplicate tensor " + name);
        }
        ck.params.add(name, Tensor(shape, std::move(data)));
    }
    if (!r.at_end()) throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint has trailing bytes");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const CheckpointHeader& header) {
    const auto bytes = encode_checkpoint(params, header);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot read checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

void round_to_f32(ParamStore& params) {
    for (ParamId i = 0; i < params.size(); ++i)
        for (double& v : params.value(i).data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace seedlab::num
