#pragma once

#include <cstddef>
#include <vector>

#include "hymad/tensor.hpp"

namespace hymad {

// Matrix-shaped views: a 1-D tensor of length n is treated as a 1 x n row.
std::size_t rows_of(const Tensor& t);
std::size_t cols_of(const Tensor& t);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x[m x n] + b[n], broadcasting b over rows.
Tensor add_row(const Tensor& x, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column means of an m x n matrix, shape [1 x n].
Tensor mean_rows(const Tensor& a);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// Stacks same-width tensors along the row axis.
Tensor concat_rows(const std::vector<Tensor>& parts);

Tensor softmax_rows(const Tensor& m);

/// Per-row normalization to zero mean / unit variance followed by an
/// elementwise affine transform.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps = 1e-5);

struct AttentionResult {
  Tensor output;
  Tensor weights;  // T_q x T_k, each row a probability vector
};

/// softmax(Q·Kᵀ/√d_k)·V
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);
AttentionResult attention_with_weights(const Tensor& q, const Tensor& k,
                                       const Tensor& v);

enum class Activation { kLinear, kRelu };

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b,
             Activation act);

/// Mean binary cross-entropy over all cells, computed from logits as
/// max(z,0) - z·y + log(1 + e^{-|z|}).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

struct RnnParams {
  Tensor w_h;  // H x H
  Tensor w_x;  // H x C_in
  Tensor b;    // H

  std::size_t hidden() const { return w_h.dim(0); }
};

/// Elman recurrence h_t = tanh(W_h h_{t-1} + W_x f_t + b) over the rows of
/// `features`; returns the T x H stack of states.
Tensor rnn_forward(const Tensor& features, const RnnParams& p,
                   const Tensor& h0);

/// Same-padded 1-D convolution of a single-channel signal x[T] with C
/// kernels of odd length L (centered taps): returns C x T.
Tensor conv1d_same(const Tensor& x, const Tensor& kernels);

/// Non-overlapping average pooling along columns: C x T -> C x (T / stride).
Tensor avg_pool_cols(const Tensor& y, std::size_t stride);

/// avg_pool_cols(conv1d_same(x, kernels), stride) evaluated directly on a
/// box-filtered copy of x; cost scales with T / stride instead of T.
Tensor conv1d_same_pooled(const Tensor& x, const Tensor& kernels,
                          std::size_t stride);

}  // namespace hymad
