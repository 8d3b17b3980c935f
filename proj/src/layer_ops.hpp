#pragma once

// Batched layer kernels shared by inference and training.

#include "ablatron/network.hpp"

#include <cstdint>
#include <vector>

namespace ablatron::detail {

struct LayerScratch {
    std::vector<float> transposed;      // dense: W^T; conv: W^T for input gradients
    std::vector<float> col;             // conv: im2col matrix (C*kH*kW) x (n*P)
    std::vector<float> product;         // conv: gemm output F x (n*P)
    std::vector<std::uint32_t> argmax;  // maxpool: flat input index per output
};

void transpose(const float* src, std::size_t rows, std::size_t cols, float* dst);

/// Pre-activation output of one layer for n samples.
void layer_forward(const Layer& layer, const float* in, std::size_t n, float* out, LayerScratch& scratch);

void relu_inplace(float* values, std::size_t count);
/// Row-wise softmax with max subtraction.
void softmax_rows(float* values, std::size_t rows, std::size_t cols);
void apply_activation(Activation act, float* values, std::size_t rows, std::size_t cols);

void im2col(const LayerSpec& spec, const float* in, std::size_t n, float* col);
void col2im_add(const LayerSpec& spec, const float* col, std::size_t n, float* dx);

}  // namespace ablatron::detail
