#pragma once

#include "agg/nn/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace agg::nn {

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

/// x[..., D] + bias[D], broadcast over leading dimensions.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// a[M,K] @ b[K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[M,K] @ b[N,K]^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x[..., Din] @ w[Din, Dout] + b[Dout]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Softmax over the last dimension.
Tensor softmax(const Tensor& a);
/// Normalizes over the last dimension, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor reshape(const Tensor& a, Shape shape);
/// Columns [start, start+len) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t len);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Each row of a 2-D tensor repeated `times` times consecutively.
Tensor repeat_rows(const Tensor& a, std::int64_t times);
/// out.flat[i] = a.flat[index[i]]; backward scatter-adds. Any gather,
/// permutation or replication can be expressed this way.
Tensor gather_flat(const Tensor& a, std::vector<std::int64_t> index, Shape shape);

/// 3x3x3 convolution, stride 1, zero padding 1, on a channels-last grid
/// [D,D,D,Cin]; weight [27*Cin, Cout], bias [Cout].
Tensor conv3d(const Tensor& grid, const Tensor& weight, const Tensor& bias);
/// 3x3 convolution, stride 1, zero padding 1, on [H,W,Cin]; weight [9*Cin, Cout].
Tensor conv2d(const Tensor& image, const Tensor& weight, const Tensor& bias);
/// 2x2 average pooling of [H,W,C] (H, W even).
Tensor avg_pool2d(const Tensor& image);

}  // namespace agg::nn
