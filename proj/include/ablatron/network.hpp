#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ablatron {

enum class LayerKind : std::uint8_t { dense = 0, conv2d = 1, maxpool = 2, flatten = 3 };
enum class Activation : std::uint8_t { none = 0, relu = 1, softmax = 2 };

/// Channel-major activation shape; dense activations are {units, 1, 1}.
struct Shape {
    std::uint32_t c = 0;
    std::uint32_t h = 1;
    std::uint32_t w = 1;

    std::size_t size() const noexcept { return std::size_t{c} * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    Shape in_shape;
    Shape out_shape;
    Activation activation = Activation::none;
    bool has_bias = false;
    // conv2d: filter_count filters of kernel_height x kernel_width.
    // maxpool: kernel_height x kernel_width window.
    std::uint32_t filter_count = 0;
    std::uint32_t kernel_height = 0;
    std::uint32_t kernel_width = 0;
    std::uint32_t stride = 1;
    std::uint32_t padding = 0;

    static LayerSpec dense(std::uint32_t in, std::uint32_t out, Activation act, bool bias);
    static LayerSpec conv2d(Shape in, std::uint32_t filters, std::uint32_t kernel, Activation act,
                            bool bias, std::uint32_t stride = 1, std::uint32_t padding = 0);
    static LayerSpec maxpool(Shape in, std::uint32_t window, std::uint32_t stride);
    static LayerSpec flatten(Shape in);

    bool has_weights() const noexcept { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
    /// Units of a dense layer or filters of a conv layer; 0 otherwise.
    std::size_t unit_count() const noexcept;
    /// Incoming weights per unit/filter.
    std::size_t fan_in() const noexcept;
    std::size_t weight_count() const noexcept { return unit_count() * fan_in(); }
    std::size_t bias_count() const noexcept { return has_bias ? unit_count() : 0; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output shape implied by the layer parameters and its input shape.
/// Throws ConfigError when the parameters are inconsistent.
Shape derive_out_shape(const LayerSpec& spec);

/// Checks that every out_shape is derivable, adjacent layers compose and
/// softmax appears only on the final layer.
void validate_architecture(std::span<const LayerSpec> arch);

/// 784 -> widths... MLP with ReLU hidden layers and a softmax output.
std::vector<LayerSpec> mlp_architecture(std::span<const std::uint32_t> widths, bool bias = false);
/// conv(16)-pool-conv(32)-pool-conv(64)-flatten-dense(10) on 1x28x28 input.
std::vector<LayerSpec> desk_cnn_architecture();

struct Layer {
    LayerSpec spec;
    // dense: out x in; conv2d: filters x in_channels x kH x kW
    std::vector<float> weights;
    std::vector<float> bias;
    bool frozen = false;

    std::span<float> unit_weights(std::size_t unit);
    std::span<const float> unit_weights(std::size_t unit) const;
};

struct Network {
    std::vector<Layer> layers;

    Shape input_shape() const;
    std::size_t output_size() const;
    std::size_t parameter_count() const noexcept;
    std::vector<LayerSpec> architecture() const;
};

/// Bitwise comparison of architecture and parameters (distinguishes -0 and +0).
bool bit_identical(const Network& a, const Network& b) noexcept;
bool bit_identical(std::span<const float> a, std::span<const float> b) noexcept;

/// Weights ~ N(0, 1/fan_in), biases zero, nothing frozen.
Network init_network(std::span<const LayerSpec> arch, std::uint64_t seed);

/// Dense row-major real matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

    float& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

/// Real-valued labelled samples, one flattened sample per row.
struct Samples {
    Shape shape;
    std::size_t class_count = 10;
    std::vector<float> features;
    std::vector<std::uint32_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return shape.size(); }
    std::span<const float> sample(std::size_t i) const { return {features.data() + i * dim(), dim()}; }
    /// Rows [begin, end) as a batch.
    Matrix batch(std::size_t begin, std::size_t end) const;
    Matrix gather(std::span<const std::size_t> indices) const;
    /// First `count` samples (or all if fewer).
    Samples head(std::size_t count) const;
    /// Throws DataError on an inconsistent layout or out-of-range labels.
    void validate() const;
};

/// Class probabilities, one row per input row. Throws DataError on
/// non-finite input and ConfigError on a shape mismatch.
Matrix forward(const Network& net, const Matrix& batch);

/// Continues a forward pass from the input of layer `first_layer`.
Matrix forward_from(const Network& net, std::size_t first_layer, const Matrix& activations);

/// Activations entering layer `layer` (layer 0 returns the batch itself).
Matrix activations_before(const Network& net, std::size_t layer, const Matrix& batch);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const float> probs) noexcept;

/// True iff `label` ranks among the k largest entries, ties resolved by index order.
bool in_top_k(std::span<const float> probs, std::size_t label, std::size_t k) noexcept;

}  // namespace ablatron
