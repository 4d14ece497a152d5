#include "hlab/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hlab/errors.hpp"

namespace hlab {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class Reader {
public:
    explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    void raw(char* out, std::size_t n) {
        need(n);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated file");
    }
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& p) {
    const auto& c = p.config;
    Writer w;
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    for (int v : {c.image_size, 3, c.views, c.hidden, c.hidden_layers, c.time_dim,
                  DenoiserConfig::pose_dim, c.ref_dim, c.mv_dim}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.u32(static_cast<std::uint32_t>(c.T));
    w.f64(c.beta_start);
    w.f64(c.beta_end);
    w.u32(static_cast<std::uint32_t>(p.layout.size()));
    for (std::size_t i = 0; i < p.layout.size(); ++i) {
        const auto& b = p.layout[i];
        w.u32(static_cast<std::uint32_t>(b.rows));
        w.u32(static_cast<std::uint32_t>(b.cols));
        const float* v = p.block(i);
        for (std::size_t k = 0; k < b.size(); ++k) w.f32(v[k]);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

DenoiserParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError("load_checkpoint: bad magic in " + path.string());
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw IoError("load_checkpoint: unsupported version " + std::to_string(version));
    }
    DenoiserConfig c;
    c.image_size = static_cast<int>(r.u32());
    if (r.u32() != 3) throw IoError("load_checkpoint: only RGB models are supported");
    c.views = static_cast<int>(r.u32());
    c.hidden = static_cast<int>(r.u32());
    c.hidden_layers = static_cast<int>(r.u32());
    c.time_dim = static_cast<int>(r.u32());
    if (r.u32() != static_cast<std::uint32_t>(DenoiserConfig::pose_dim)) {
        throw IoError("load_checkpoint: unexpected pose embedding width");
    }
    c.ref_dim = static_cast<int>(r.u32());
    c.mv_dim = static_cast<int>(r.u32());
    c.T = static_cast<int>(r.u32());
    c.beta_start = r.f64();
    c.beta_end = r.f64();

    DenoiserParams p;
    p.config = c;
    try {
        p.layout = param_layout(c);
    } catch (const ConfigError& e) {
        throw IoError(std::string("load_checkpoint: bad header: ") + e.what());
    }
    p.version = version;
    const auto& last = p.layout.back();
    p.values.resize(last.offset + last.size());
    if (r.u32() != p.layout.size()) throw IoError("load_checkpoint: block count mismatch");
    for (std::size_t i = 0; i < p.layout.size(); ++i) {
        const auto& b = p.layout[i];
        const auto rows = static_cast<int>(r.u32());
        const auto cols = static_cast<int>(r.u32());
        if (rows != b.rows || cols != b.cols) throw IoError("load_checkpoint: block shape mismatch for " + b.name);
        float* v = p.block(i);
        for (std::size_t k = 0; k < b.size(); ++k) {
            v[k] = r.f32();
            if (!std::isfinite(v[k])) throw IoError("load_checkpoint: non-finite parameter in " + b.name);
        }
    }
    if (!r.done()) throw IoError("load_checkpoint: trailing bytes");
    return p;
}

}  // namespace hlab
