#pragma once
#include <vector>

#include "casenet/graph.hpp"
#include "casenet/tensor.hpp"

namespace casenet::ops {

/// Batched matrix product A[..,m,k] * B[..,k,n] -> [..,m,n]. Leading extents
/// must match, or one side may have none (it is broadcast across batches).
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);

/// x: [c_in, L] or [B, c_in, L]; w: [c_out, c_in, k]; bias: [c_out].
/// No implicit padding; callers pad explicitly (see pad_time).
Tensor conv1d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int dilation);

/// Row-wise softmax over the last axis of [.., L, L] with additive mask [L, L]
/// whose entries are 0 or the -inf sentinel. Masked positions get exactly 0.
Tensor masked_softmax(Graph& g, const Tensor& scores, const Tensor& mask);

// elementwise, shapes must match exactly
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor div(Graph& g, const Tensor& a, const Tensor& b);

Tensor sigmoid(Graph& g, const Tensor& x);
Tensor relu(Graph& g, const Tensor& x);
Tensor sqrt(Graph& g, const Tensor& x);
Tensor scale(Graph& g, const Tensor& x, double c);
Tensor add_scalar(Graph& g, const Tensor& x, double c);
Tensor clamp_min(Graph& g, const Tensor& x, double floor);

/// h: [B, D, L] scaled per channel by a: [B, D], broadcast over time.
Tensor mul_channelwise(Graph& g, const Tensor& h, const Tensor& a);
/// bias: 1-D of extent x.shape[axis], broadcast over all other axes.
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias, int axis);

Tensor reduce_mean(Graph& g, const Tensor& x, int axis);
Tensor reduce_sum(Graph& g, const Tensor& x, int axis);
Tensor reduce_sum_all(Graph& g, const Tensor& x);  // -> scalar

Tensor transpose(Graph& g, const Tensor& x);  // swaps the last two axes
Tensor slice_rows(Graph& g, const Tensor& x, int row_begin, int row_end);  // 2-D only
Tensor concat(Graph& g, const std::vector<Tensor>& parts, int axis);
Tensor pad_time(Graph& g, const Tensor& x, int left, int right);  // zeros along the last axis

/// Normalizes [B, D, L] over the channel axis at each (b, t); gain/bias: [D].
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

}  // namespace casenet::ops
