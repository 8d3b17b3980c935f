#include "ablatron/checkpoint.hpp"

#include "ablatron/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace ablatron {
namespace {

constexpr std::array<char, 4> kMagic{'A', 'B', 'L', 'T'};

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_u32(std::ostream& out, std::uint32_t v)
{
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n, const char* what)
    {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw CheckpointError(CheckpointError::Kind::truncated, std::string("truncated blob while reading ") + what);
        }
    }

    std::uint8_t u8(const char* what)
    {
        char c = 0;
        bytes(&c, 1, what);
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32(const char* what)
    {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4, what);
        return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
               (std::uint32_t{b[3]} << 24);
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

private:
    std::istream& in_;
};

}  // namespace

void write_checkpoint(const Network& net, std::ostream& out)
{
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& layer : net.layers) {
        const LayerSpec& s = layer.spec;
        put_u8(out, static_cast<std::uint8_t>(s.kind));
        put_u8(out, static_cast<std::uint8_t>(s.activation));
        for (std::uint32_t v : {s.in_shape.c, s.in_shape.h, s.in_shape.w, s.out_shape.c, s.out_shape.h, s.out_shape.w,
                                s.filter_count, s.kernel_height, s.kernel_width, s.stride, s.padding}) {
            put_u32(out, v);
        }
        put_u8(out, s.has_bias ? 1 : 0);
    }
    for (const Layer& layer : net.layers) {
        for (float w : layer.weights) put_f32(out, w);
        for (float b : layer.bias) put_f32(out, b);
    }
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "failed to write checkpoint");
}

Network read_checkpoint(std::istream& in)
{
    Reader r(in);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), magic.size(), "magic");
    if (magic != kMagic) throw CheckpointError(CheckpointError::Kind::bad_magic, "not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32("format version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointError::Kind::version,
                              "unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint32_t count = r.u32("layer count");
    if (count == 0 || count > 4096) {
        throw CheckpointError(CheckpointError::Kind::shape, "implausible layer count " + std::to_string(count));
    }
    std::vector<LayerSpec> arch(count);
    for (LayerSpec& s : arch) {
        const std::uint8_t kind = r.u8("layer kind");
        const std::uint8_t act = r.u8("activation");
        if (kind > static_cast<std::uint8_t>(LayerKind::flatten) || act > static_cast<std::uint8_t>(Activation::softmax)) {
            throw CheckpointError(CheckpointError::Kind::shape, "unknown layer kind or activation tag");
        }
        s.kind = static_cast<LayerKind>(kind);
        s.activation = static_cast<Activation>(act);
        std::uint32_t* fields[] = {&s.in_shape.c, &s.in_shape.h, &s.in_shape.w, &s.out_shape.c, &s.out_shape.h,
                                   &s.out_shape.w, &s.filter_count, &s.kernel_height, &s.kernel_width, &s.stride,
                                   &s.padding};
        for (std::uint32_t* f : fields) *f = r.u32("layer shape");
        const std::uint8_t bias = r.u8("bias flag");
        if (bias > 1) throw CheckpointError(CheckpointError::Kind::shape, "invalid bias flag");
        s.has_bias = bias == 1;
    }
    try {
        validate_architecture(arch);
    } catch (const ConfigError& e) {
        throw CheckpointError(CheckpointError::Kind::shape, std::string("checkpoint architecture is invalid: ") + e.what());
    }

    Network net;
    for (const LayerSpec& s : arch) {
        Layer layer;
        layer.spec = s;
        layer.weights.resize(s.weight_count());
        layer.bias.resize(s.bias_count());
        for (float& w : layer.weights) w = r.f32("weights");
        for (float& b : layer.bias) b = r.f32("biases");
        net.layers.push_back(std::move(layer));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw CheckpointError(CheckpointError::Kind::shape, "parameter blob is larger than the architecture implies");
    }
    return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
    write_checkpoint(net, out);
}

Network load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace ablatron
