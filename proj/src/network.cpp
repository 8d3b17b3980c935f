#include "ablatron/network.hpp"

#include "ablatron/error.hpp"
#include "ablatron/kernels.hpp"
#include "layer_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

namespace ablatron {

LayerSpec LayerSpec::dense(std::uint32_t in, std::uint32_t out, Activation act, bool bias)
{
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_shape = {in, 1, 1};
    s.out_shape = {out, 1, 1};
    s.activation = act;
    s.has_bias = bias;
    return s;
}

LayerSpec LayerSpec::conv2d(Shape in, std::uint32_t filters, std::uint32_t kernel, Activation act, bool bias,
                            std::uint32_t stride, std::uint32_t padding)
{
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_shape = in;
    s.activation = act;
    s.has_bias = bias;
    s.filter_count = filters;
    s.kernel_height = kernel;
    s.kernel_width = kernel;
    s.stride = stride;
    s.padding = padding;
    s.out_shape = derive_out_shape(s);
    return s;
}

LayerSpec LayerSpec::maxpool(Shape in, std::uint32_t window, std::uint32_t stride)
{
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.in_shape = in;
    s.kernel_height = window;
    s.kernel_width = window;
    s.stride = stride;
    s.out_shape = derive_out_shape(s);
    return s;
}

LayerSpec LayerSpec::flatten(Shape in)
{
    LayerSpec s;
    s.kind = LayerKind::flatten;
    s.in_shape = in;
    s.out_shape = {static_cast<std::uint32_t>(in.size()), 1, 1};
    return s;
}

std::size_t LayerSpec::unit_count() const noexcept
{
    switch (kind) {
    case LayerKind::dense: return out_shape.c;
    case LayerKind::conv2d: return filter_count;
    default: return 0;
    }
}

std::size_t LayerSpec::fan_in() const noexcept
{
    switch (kind) {
    case LayerKind::dense: return in_shape.size();
    case LayerKind::conv2d: return std::size_t{in_shape.c} * kernel_height * kernel_width;
    default: return 0;
    }
}

namespace {

std::uint32_t window_extent(std::uint32_t in, std::uint32_t kernel, std::uint32_t stride, std::uint32_t pad)
{
    const std::int64_t span = std::int64_t{in} + 2 * std::int64_t{pad} - kernel;
    if (kernel == 0 || stride == 0 || span < 0) {
        throw ConfigError("window of size " + std::to_string(kernel) + " does not fit input extent " +
                          std::to_string(in));
    }
    return static_cast<std::uint32_t>(span / stride + 1);
}

}  // namespace

Shape derive_out_shape(const LayerSpec& spec)
{
    const Shape& in = spec.in_shape;
    if (in.size() == 0) throw ConfigError("layer input shape is empty");
    switch (spec.kind) {
    case LayerKind::dense:
        if (in.h != 1 || in.w != 1) throw ConfigError("dense layer expects a flat input");
        if (spec.out_shape.c == 0 || spec.out_shape.h != 1 || spec.out_shape.w != 1) {
            throw ConfigError("dense layer needs a positive flat output width");
        }
        return spec.out_shape;
    case LayerKind::conv2d:
        if (spec.filter_count == 0) throw ConfigError("conv2d layer needs at least one filter");
        return {spec.filter_count, window_extent(in.h, spec.kernel_height, spec.stride, spec.padding),
                window_extent(in.w, spec.kernel_width, spec.stride, spec.padding)};
    case LayerKind::maxpool:
        return {in.c, window_extent(in.h, spec.kernel_height, spec.stride, 0),
                window_extent(in.w, spec.kernel_width, spec.stride, 0)};
    case LayerKind::flatten:
        return {static_cast<std::uint32_t>(in.size()), 1, 1};
    }
    throw ConfigError("unknown layer kind");
}

void validate_architecture(std::span<const LayerSpec> arch)
{
    if (arch.empty()) throw ConfigError("architecture has no layers");
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec& s = arch[i];
        const std::string where = "layer " + std::to_string(i) + ": ";
        if (derive_out_shape(s) != s.out_shape) throw ConfigError(where + "output shape does not match parameters");
        if (i > 0 && arch[i - 1].out_shape != s.in_shape) {
            throw ConfigError(where + "input shape does not match the previous layer's output");
        }
        if (s.activation == Activation::softmax && i + 1 != arch.size()) {
            throw ConfigError(where + "softmax is only allowed on the final layer");
        }
        if (!s.has_weights() && (s.activation != Activation::none || s.has_bias)) {
            throw ConfigError(where + "parameter-free layer cannot carry an activation or bias");
        }
    }
}

std::vector<LayerSpec> mlp_architecture(std::span<const std::uint32_t> widths, bool bias)
{
    if (widths.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
    std::vector<LayerSpec> arch;
    for (std::size_t i = 1; i < widths.size(); ++i) {
        const bool last = i + 1 == widths.size();
        arch.push_back(LayerSpec::dense(widths[i - 1], widths[i], last ? Activation::softmax : Activation::relu, bias));
    }
    return arch;
}

std::vector<LayerSpec> desk_cnn_architecture()
{
    std::vector<LayerSpec> arch;
    arch.push_back(LayerSpec::conv2d({1, 28, 28}, 16, 3, Activation::relu, true));
    arch.push_back(LayerSpec::maxpool(arch.back().out_shape, 2, 2));
    arch.push_back(LayerSpec::conv2d(arch.back().out_shape, 32, 3, Activation::relu, true));
    arch.push_back(LayerSpec::maxpool(arch.back().out_shape, 2, 2));
    arch.push_back(LayerSpec::conv2d(arch.back().out_shape, 64, 3, Activation::relu, true));
    arch.push_back(LayerSpec::flatten(arch.back().out_shape));
    arch.push_back(LayerSpec::dense(static_cast<std::uint32_t>(arch.back().out_shape.c), 10, Activation::softmax, true));
    return arch;
}

std::span<float> Layer::unit_weights(std::size_t unit)
{
    const std::size_t fan = spec.fan_in();
    return {weights.data() + unit * fan, fan};
}

std::span<const float> Layer::unit_weights(std::size_t unit) const
{
    const std::size_t fan = spec.fan_in();
    return {weights.data() + unit * fan, fan};
}

Shape Network::input_shape() const
{
    if (layers.empty()) throw ConfigError("network has no layers");
    return layers.front().spec.in_shape;
}

std::size_t Network::output_size() const
{
    if (layers.empty()) throw ConfigError("network has no layers");
    return layers.back().spec.out_shape.size();
}

std::size_t Network::parameter_count() const noexcept
{
    std::size_t total = 0;
    for (const Layer& l : layers) total += l.weights.size() + l.bias.size();
    return total;
}

std::vector<LayerSpec> Network::architecture() const
{
    std::vector<LayerSpec> arch;
    arch.reserve(layers.size());
    for (const Layer& l : layers) arch.push_back(l.spec);
    return arch;
}

bool bit_identical(std::span<const float> a, std::span<const float> b) noexcept
{
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

bool bit_identical(const Network& a, const Network& b) noexcept
{
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const Layer& la = a.layers[i];
        const Layer& lb = b.layers[i];
        if (!(la.spec == lb.spec) || !bit_identical(la.weights, lb.weights) || !bit_identical(la.bias, lb.bias)) {
            return false;
        }
    }
    return true;
}

Network init_network(std::span<const LayerSpec> arch, std::uint64_t seed)
{
    validate_architecture(arch);
    std::mt19937_64 rng(seed);
    Network net;
    net.layers.reserve(arch.size());
    for (const LayerSpec& spec : arch) {
        Layer layer;
        layer.spec = spec;
        if (spec.has_weights()) {
            std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(spec.fan_in())));
            layer.weights.resize(spec.weight_count());
            for (float& w : layer.weights) w = static_cast<float>(normal(rng));
            layer.bias.assign(spec.bias_count(), 0.0f);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Matrix Samples::batch(std::size_t begin, std::size_t end) const
{
    end = std::min(end, size());
    Matrix m(end > begin ? end - begin : 0, dim());
    std::copy(features.begin() + static_cast<std::ptrdiff_t>(begin * dim()),
              features.begin() + static_cast<std::ptrdiff_t>(end * dim()), m.values.begin());
    return m;
}

Matrix Samples::gather(std::span<const std::size_t> indices) const
{
    Matrix m(indices.size(), dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = sample(indices[r]);
        std::copy(src.begin(), src.end(), m.row(r).begin());
    }
    return m;
}

Samples Samples::head(std::size_t count) const
{
    count = std::min(count, size());
    Samples out;
    out.shape = shape;
    out.class_count = class_count;
    out.features.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(count * dim()));
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
}

void Samples::validate() const
{
    if (features.size() != labels.size() * dim()) throw DataError("feature count does not match label count");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) {
            throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                            " is outside [0, " + std::to_string(class_count) + ")");
        }
    }
}

namespace detail {

void transpose(const float* src, std::size_t rows, std::size_t cols, float* dst)
{
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

void im2col(const LayerSpec& spec, const float* in, std::size_t n, float* col)
{
    const Shape& is = spec.in_shape;
    const Shape& os = spec.out_shape;
    const std::size_t plane = std::size_t{os.h} * os.w;
    const std::size_t width = n * plane;
    const std::int64_t pad = spec.padding;
    for (std::uint32_t c = 0; c < is.c; ++c) {
        for (std::uint32_t ki = 0; ki < spec.kernel_height; ++ki) {
            for (std::uint32_t kj = 0; kj < spec.kernel_width; ++kj) {
                const std::size_t r = (std::size_t{c} * spec.kernel_height + ki) * spec.kernel_width + kj;
                for (std::size_t s = 0; s < n; ++s) {
                    const float* src = in + s * is.size() + std::size_t{c} * is.h * is.w;
                    float* dst = col + r * width + s * plane;
                    for (std::uint32_t oy = 0; oy < os.h; ++oy) {
                        const std::int64_t iy = std::int64_t{oy} * spec.stride + ki - pad;
                        for (std::uint32_t ox = 0; ox < os.w; ++ox) {
                            const std::int64_t ix = std::int64_t{ox} * spec.stride + kj - pad;
                            const bool inside = iy >= 0 && iy < is.h && ix >= 0 && ix < is.w;
                            *dst++ = inside ? src[iy * is.w + ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const LayerSpec& spec, const float* col, std::size_t n, float* dx)
{
    const Shape& is = spec.in_shape;
    const Shape& os = spec.out_shape;
    const std::size_t plane = std::size_t{os.h} * os.w;
    const std::size_t width = n * plane;
    const std::int64_t pad = spec.padding;
    for (std::uint32_t c = 0; c < is.c; ++c) {
        for (std::uint32_t ki = 0; ki < spec.kernel_height; ++ki) {
            for (std::uint32_t kj = 0; kj < spec.kernel_width; ++kj) {
                const std::size_t r = (std::size_t{c} * spec.kernel_height + ki) * spec.kernel_width + kj;
                for (std::size_t s = 0; s < n; ++s) {
                    float* dst = dx + s * is.size() + std::size_t{c} * is.h * is.w;
                    const float* src = col + r * width + s * plane;
                    for (std::uint32_t oy = 0; oy < os.h; ++oy) {
                        const std::int64_t iy = std::int64_t{oy} * spec.stride + ki - pad;
                        for (std::uint32_t ox = 0; ox < os.w; ++ox, ++src) {
                            const std::int64_t ix = std::int64_t{ox} * spec.stride + kj - pad;
                            if (iy >= 0 && iy < is.h && ix >= 0 && ix < is.w) dst[iy * is.w + ix] += *src;
                        }
                    }
                }
            }
        }
    }
}

namespace {

void dense_forward(const Layer& layer, const float* in, std::size_t n, float* out, LayerScratch& scratch)
{
    const std::size_t fan = layer.spec.in_shape.size();
    const std::size_t units = layer.spec.out_shape.c;
    scratch.transposed.resize(fan * units);
    transpose(layer.weights.data(), units, fan, scratch.transposed.data());
    kernels::gemm(n, units, fan, in, fan, scratch.transposed.data(), units, out, units, false);
    if (layer.spec.has_bias) {
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t u = 0; u < units; ++u) out[s * units + u] += layer.bias[u];
        }
    }
}

void conv_forward(const Layer& layer, const float* in, std::size_t n, float* out, LayerScratch& scratch)
{
    const LayerSpec& spec = layer.spec;
    const std::size_t plane = std::size_t{spec.out_shape.h} * spec.out_shape.w;
    const std::size_t width = n * plane;
    const std::size_t fan = spec.fan_in();
    const std::size_t filters = spec.filter_count;
    scratch.col.resize(fan * width);
    scratch.product.resize(filters * width);
    im2col(spec, in, n, scratch.col.data());
    kernels::gemm(filters, width, fan, layer.weights.data(), fan, scratch.col.data(), width,
                  scratch.product.data(), width, false);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t f = 0; f < filters; ++f) {
            const float b = spec.has_bias ? layer.bias[f] : 0.0f;
            const float* src = scratch.product.data() + f * width + s * plane;
            float* dst = out + (s * filters + f) * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
        }
    }
}

void maxpool_forward(const LayerSpec& spec, const float* in, std::size_t n, float* out, LayerScratch& scratch)
{
    const Shape& is = spec.in_shape;
    const Shape& os = spec.out_shape;
    scratch.argmax.resize(n * os.size());
    std::uint32_t* arg = scratch.argmax.data();
    for (std::size_t s = 0; s < n; ++s) {
        for (std::uint32_t c = 0; c < os.c; ++c) {
            const std::size_t base = s * is.size() + std::size_t{c} * is.h * is.w;
            for (std::uint32_t oy = 0; oy < os.h; ++oy) {
                for (std::uint32_t ox = 0; ox < os.w; ++ox) {
                    std::size_t best = base + std::size_t{oy} * spec.stride * is.w + std::size_t{ox} * spec.stride;
                    for (std::uint32_t ky = 0; ky < spec.kernel_height; ++ky) {
                        for (std::uint32_t kx = 0; kx < spec.kernel_width; ++kx) {
                            const std::size_t idx = base + (std::size_t{oy} * spec.stride + ky) * is.w +
                                                    std::size_t{ox} * spec.stride + kx;
                            if (in[idx] > in[best]) best = idx;
                        }
                    }
                    *out++ = in[best];
                    *arg++ = static_cast<std::uint32_t>(best - s * is.size());
                }
            }
        }
    }
}

}  // namespace

void layer_forward(const Layer& layer, const float* in, std::size_t n, float* out, LayerScratch& scratch)
{
    switch (layer.spec.kind) {
    case LayerKind::dense: dense_forward(layer, in, n, out, scratch); break;
    case LayerKind::conv2d: conv_forward(layer, in, n, out, scratch); break;
    case LayerKind::maxpool: maxpool_forward(layer.spec, in, n, out, scratch); break;
    case LayerKind::flatten: std::copy(in, in + n * layer.spec.in_shape.size(), out); break;
    }
}

void relu_inplace(float* values, std::size_t count)
{
    for (std::size_t i = 0; i < count; ++i) values[i] = values[i] > 0.0f ? values[i] : 0.0f;
}

void softmax_rows(float* values, std::size_t rows, std::size_t cols)
{
    std::vector<double> e(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        float* row = values + r * cols;
        const float top = *std::max_element(row, row + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            e[c] = std::exp(static_cast<double>(row[c]) - static_cast<double>(top));
            total += e[c];
        }
        for (std::size_t c = 0; c < cols; ++c) row[c] = static_cast<float>(e[c] / total);
    }
}

void apply_activation(Activation act, float* values, std::size_t rows, std::size_t cols)
{
    switch (act) {
    case Activation::relu: relu_inplace(values, rows * cols); break;
    case Activation::softmax: softmax_rows(values, rows, cols); break;
    case Activation::none: break;
    }
}

}  // namespace detail

namespace {

constexpr std::size_t kForwardChunk = 256;

Matrix run_layers(const Network& net, std::size_t first, std::size_t last, const Matrix& input)
{
    if (first > last || last > net.layers.size()) throw ConfigError("layer range out of bounds");
    const std::size_t in_dim = first < net.layers.size() ? net.layers[first].spec.in_shape.size()
                                                         : net.layers.back().spec.out_shape.size();
    if (input.cols != in_dim) {
        throw ConfigError("batch width " + std::to_string(input.cols) + " does not match layer input size " +
                          std::to_string(in_dim));
    }
    if (first == last) return input;
    const std::size_t out_dim = net.layers[last - 1].spec.out_shape.size();
    Matrix result(input.rows, out_dim);
    detail::LayerScratch scratch;
    std::vector<float> a, b;
    for (std::size_t begin = 0; begin < input.rows; begin += kForwardChunk) {
        const std::size_t n = std::min(kForwardChunk, input.rows - begin);
        a.assign(input.values.begin() + static_cast<std::ptrdiff_t>(begin * in_dim),
                 input.values.begin() + static_cast<std::ptrdiff_t>((begin + n) * in_dim));
        for (std::size_t l = first; l < last; ++l) {
            const Layer& layer = net.layers[l];
            b.resize(n * layer.spec.out_shape.size());
            detail::layer_forward(layer, a.data(), n, b.data(), scratch);
            detail::apply_activation(layer.spec.activation, b.data(), n, layer.spec.out_shape.size());
            std::swap(a, b);
        }
        std::copy(a.begin(), a.end(), result.values.begin() + static_cast<std::ptrdiff_t>(begin * out_dim));
    }
    return result;
}

void require_finite(const Matrix& m)
{
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        if (!std::isfinite(m.values[i])) {
            throw DataError("non-finite input value in row " + std::to_string(i / std::max<std::size_t>(m.cols, 1)));
        }
    }
}

}  // namespace

Matrix forward(const Network& net, const Matrix& batch)
{
    require_finite(batch);
    return run_layers(net, 0, net.layers.size(), batch);
}

Matrix forward_from(const Network& net, std::size_t first_layer, const Matrix& activations)
{
    require_finite(activations);
    return run_layers(net, first_layer, net.layers.size(), activations);
}

Matrix activations_before(const Network& net, std::size_t layer, const Matrix& batch)
{
    require_finite(batch);
    return run_layers(net, 0, layer, batch);
}

std::size_t argmax(std::span<const float> probs) noexcept
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

bool in_top_k(std::span<const float> probs, std::size_t label, std::size_t k) noexcept
{
    const float target = probs[label];
    std::size_t ahead = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > target || (probs[i] == target && i < label)) ++ahead;
    }
    return ahead < k;
}

}  // namespace ablatron
