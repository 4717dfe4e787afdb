#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seedlab/numerics/tensor.hpp"

namespace seedlab::num {

// Value-level tensor operations. The autodiff graph computes forward values
// through these same functions, so graph and plain evaluation agree bitwise.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise with 2-D broadcasting: each of (rows, cols) must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor gelu_tanh(const Tensor& x);
Tensor gelu_tanh_grad(const Tensor& x);

struct LayerNormCache {
    Tensor xhat;               // normalized input, before gain/bias
    std::vector<double> rstd;  // per row 1/sqrt(var + eps)
};
constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache* cache = nullptr);

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices);
Tensor concat_cols(std::span<const Tensor* const> parts);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// mean((a - b)^2) as a 1x1 tensor
Tensor squared_error(const Tensor& a, const Tensor& b);

// Sums a broadcast gradient back down to `shape`.
Tensor reduce_to_shape(const Tensor& grad, const Shape& shape);

}  // namespace seedlab::num
