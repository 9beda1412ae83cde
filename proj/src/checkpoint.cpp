#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

#include "pnn/optim.hpp"

namespace pnn::optim {

namespace {

constexpr char kMagic[4] = {'P', 'N', 'N', 'W'};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& what) : Error("optim.checkpoint", what) {}
};

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
    void floats(const std::vector<float>& v) {
        for (float f : v) f32(f);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return next(1)[0]; }
    std::uint16_t u16() {
        const auto* p = next(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        const auto* p = next(4);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void floats(std::vector<float>& v) {
        if (remaining() / 4 < v.size()) throw CheckpointError("checkpoint truncated inside tensor data");
        for (float& f : v) f = f32();
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::uint8_t* next(std::size_t n) {
        if (remaining() < n) throw CheckpointError("checkpoint truncated");
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

constexpr std::uint32_t kMaxChannels = 1u << 16;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& params, const NetworkSpec& spec) {
    spec.validate();
    params.check(spec);
    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    w.u8(spec.residual ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(spec.input.pan_channels));
    w.u32(static_cast<std::uint32_t>(spec.input.ms_bands));
    w.u32(static_cast<std::uint32_t>(spec.input.index_bands));
    w.f32(spec.value_scale);
    for (const auto& L : spec.layers) {
        w.u32(static_cast<std::uint32_t>(L.in_channels));
        w.u32(static_cast<std::uint32_t>(L.out_channels));
        w.u32(static_cast<std::uint32_t>(L.kernel));
        w.u8(L.activation == Activation::relu ? 1 : 0);
        w.u8(L.batch_norm ? 1 : 0);
    }
    for (const auto& P : params.layers) {
        w.floats(P.weights.data());
        w.floats(P.bias);
        w.floats(P.bn_scale);
        w.floats(P.bn_shift);
        w.floats(P.bn_mean);
        w.floats(P.bn_var);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin(),
                                        [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
        throw CheckpointError("missing PNNW magic");
    Reader r(bytes.subspan(4));
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    Checkpoint ck;
    const std::uint32_t layers = r.u32();
    if (layers == 0 || layers > 1024) throw CheckpointError("implausible layer count");
    ck.spec.residual = r.u8() != 0;
    ck.spec.input.pan_channels = static_cast<int>(r.u32());
    ck.spec.input.ms_bands = static_cast<int>(r.u32());
    ck.spec.input.index_bands = static_cast<int>(r.u32());
    ck.spec.value_scale = r.f32();
    for (std::uint32_t l = 0; l < layers; ++l) {
        LayerSpec L;
        const std::uint32_t in = r.u32(), out = r.u32(), k = r.u32();
        if (in > kMaxChannels || out > kMaxChannels || k > 255) throw CheckpointError("implausible layer shape");
        L.in_channels = static_cast<int>(in);
        L.out_channels = static_cast<int>(out);
        L.kernel = static_cast<int>(k);
        L.activation = r.u8() ? Activation::relu : Activation::identity;
        L.batch_norm = r.u8() != 0;
        ck.spec.layers.push_back(L);
    }
    try {
        ck.spec.validate();
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("stored network is inconsistent: ") + e.what());
    }
    for (const auto& L : ck.spec.layers) {
        LayerParams P;
        const std::size_t weights = static_cast<std::size_t>(L.out_channels) * L.in_channels * L.kernel * L.kernel;
        if (r.remaining() / 4 < weights) throw CheckpointError("checkpoint truncated inside tensor data");
        P.weights = Tensor4(L.out_channels, L.in_channels, L.kernel, L.kernel);
        r.floats(P.weights.data());
        P.bias.resize(static_cast<std::size_t>(L.out_channels));
        r.floats(P.bias);
        const std::size_t bn = L.batch_norm ? static_cast<std::size_t>(L.out_channels) : 0;
        for (auto* v : {&P.bn_scale, &P.bn_shift, &P.bn_mean, &P.bn_var}) {
            v->resize(bn);
            r.floats(*v);
        }
        ck.params.layers.push_back(std::move(P));
    }
    if (r.remaining() != 0) throw CheckpointError("unexpected bytes after tensor data");
    try {
        ck.params.check(ck.spec);
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("corrupt tensors: ") + e.what());
    }
    return ck;
}

void save_checkpoint(const NetworkParams& params, const NetworkSpec& spec, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(params, spec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.spec == expected)) {
        // Report the first disagreeing shape in the message.
        try {
            ck.params.check(expected);
        } catch (const ShapeError& e) {
            throw ShapeError(std::string("checkpoint does not fit the requested network: ") + e.what());
        }
        throw ShapeError("checkpoint network description differs from the requested network");
    }
    return ck;
}

}  // namespace pnn::optim
