#pragma once

#include <cstddef>
#include <vector>

#include "skicl/tensor/tensor.hpp"

// Differentiable tensor operations. Every op validates shapes and throws
// std::invalid_argument naming the op and the offending shapes.
//
// Broadcasting is deliberately narrow: a binary op accepts either equal
// shapes, a right operand whose shape is a suffix of the left operand's shape
// (broadcast over leading extents), or a one-element right operand.
namespace skicl {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// a: [..., M, K]. b: [K, P] (shared) or [..., K, P] with a's leading extents.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Gathers entries along the leading axis; indices may repeat.
Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& indices);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Sum over all elements of (a - b)^2.
Tensor squared_error_sum(const Tensor& a, const Tensor& b);

/// Probability clamp used before every log in binary cross-entropy.
inline constexpr double kBceClamp = 1e-7;

/// Binary cross-entropy of `prob` ([..., N, N]) against `target` ([N, N]),
/// restricted to entries where `mask` is 1. Each leading slice contributes its
/// observed-entry mean; slices are then averaged.
Tensor masked_bce(const Tensor& prob, const Tensor& target, const Tensor& mask);

/// Squared error of `pred` against `target`, observed-entry mean per leading
/// slice, averaged over slices. Shapes as in masked_bce.
Tensor masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask);

enum class ConvPadding { causal, valid };

/// 1D dilated convolution along the second-to-last axis.
///   x: [..., T, C_in], weight: [K, C_in, C_out], bias: [C_out] or undefined.
///   out[t] = bias + sum_k x[t - dilation*k] * weight[k]
/// Causal padding reads negative time indices as zero and keeps length T;
/// valid padding drops the first dilation*(K-1) steps.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t dilation,
              ConvPadding padding);

/// Single-channel causal form: h: [T], kernel: [K] -> [T],
/// r_t = sum_k kernel[k] * h[t - dilation*k].
Tensor dilated_causal_conv1d(const Tensor& h, const Tensor& kernel, std::size_t dilation);

struct BatchNormState {
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C]
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Normalizes the last axis of x ([..., C]) per channel. In training mode uses
/// batch statistics and updates the running estimates; otherwise uses them.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);

/// u, v: [B, N, H] -> out: [B, N, N, H] with out[b,i,j] = u[b,i] + v[b,j].
Tensor pairwise_add(const Tensor& u, const Tensor& v);

/// adjacency: [B, N, N], features: [B, N, ...] ->
/// out[b,i,...] = sum_j adjacency[b,j,i] * features[b,j,...].
Tensor graph_aggregate(const Tensor& adjacency, const Tensor& features);

}  // namespace skicl
