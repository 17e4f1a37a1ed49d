#pragma once

#include <vector>

#include "updet/tensor.hpp"

namespace updet {

// Reverse-mode differentiable tensor ops. Every op validates shapes, guards
// against non-finite outputs, and appends a record to `tape` when recording
// is active and any input requires a gradient. Passing tape == nullptr runs
// the op in inference mode.

// a [..., k] x w [k, n] -> [..., n]; leading dims of `a` are flattened.
Tensor matmul(const Tensor& a, const Tensor& w, Tape* tape);

// Batched matmul. a [B, m, k]; b [B, k, n] (or [B, n, k] with transpose_b).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, Tape* tape);

// b's shape must equal a's shape or be a trailing suffix of it (broadcast).
Tensor add(const Tensor& a, const Tensor& b, Tape* tape);

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);

// scale * a + shift, elementwise.
Tensor affine(const Tensor& a, double scale, double shift, Tape* tape);

Tensor relu(const Tensor& a, Tape* tape);
Tensor tanh_op(const Tensor& a, Tape* tape);
Tensor sigmoid(const Tensor& a, Tape* tape);
Tensor abs_op(const Tensor& a, Tape* tape);

Tensor concat(const std::vector<Tensor>& xs, int axis, Tape* tape);
Tensor slice(const Tensor& a, int axis, int start, int len, Tape* tape);

Tensor sum(const Tensor& a, Tape* tape);
Tensor mean(const Tensor& a, Tape* tape);
Tensor sum_axis(const Tensor& a, int axis, Tape* tape);
Tensor mean_axis(const Tensor& a, int axis, Tape* tape);

// (a - b)^2 elementwise.
Tensor squared_error(const Tensor& a, const Tensor& b, Tape* tape);

// Row-wise softmax of logits / sqrt(scale_dim) over the last axis.
Tensor softmax_scaled(const Tensor& logits, int scale_dim, Tape* tape);

// Per-row (last axis) normalization: gain * (x - mu) / sqrt(var + eps) + bias.
// Variance is the population variance; a zero-variance row maps to `bias`.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  Tape* tape);

// a [..., n], idx [rows] with rows = numel/n -> [rows]; out[r] = a[r, idx[r]].
Tensor gather(const Tensor& a, const std::vector<int>& idx, Tape* tape);

// Copy with a new shape of equal element count.
Tensor reshape(const Tensor& a, Shape shape, Tape* tape);

}  // namespace updet
