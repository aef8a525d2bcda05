#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string_view>

#include "urw/numerics/tensor.hpp"

// Differentiable tensor ops. Every op takes the tape it records onto as its
// first argument; a non-recording tape gives plain inference. Outputs are
// checked for NaN/Inf and a DimensionError names the offending shapes.
namespace urw::num {

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// a[..., n] + bias[n]
Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias);
// scale * a + shift
Tensor affine(Tape& tape, const Tensor& a, double scale, double shift = 0.0);

// a[..., k] x b[k, n] -> [..., n]; leading axes of a are flattened into rows.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// Batched a[B, m, k] x b[B, k, n]; with transpose_b, b is [B, n, k].
Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b, bool transpose_b = false);

// Row-wise softmax over the last axis restricted to entries with mask.keep != 0.
// Masked entries come out exactly 0 and receive no gradient.
Tensor softmax_masked(Tape& tape, const Tensor& x, const Mask& mask);
Tensor softmax(Tape& tape, const Tensor& x);

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
// log(max(x, floor)); zero gradient where the floor is active.
Tensor log_clamped(Tape& tape, const Tensor& x, double floor = 1e-12);

Tensor concat_last(Tape& tape, const Tensor& a, const Tensor& b);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Rows of table[V, d] selected by ids; result shape is prefix + [d].
// Backward scatter-adds into the table. `table_name` appears in index errors.
Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::size_t> ids,
                 Shape prefix, std::string_view table_name);

// [B, m, h*dh] <-> [B*h, m, dh]
Tensor split_heads(Tape& tape, const Tensor& x, std::size_t heads);
Tensor merge_heads(Tape& tape, const Tensor& x, std::size_t heads);
// [B*h, T, m] -> [B, T, m], arithmetic mean over the first `count` heads of
// each batch item (all heads when count is 0).
Tensor mean_heads(Tape& tape, const Tensor& x, std::size_t heads, std::size_t count = 0);

// Appends row[d] as position m of every batch item: [B, m, d] -> [B, m+1, d].
Tensor append_row(Tape& tape, const Tensor& x, const Tensor& row);

Tensor sum_last(Tape& tape, const Tensor& x);
Tensor sum_all(Tape& tape, const Tensor& x);
// x[..., V] picked at idx per leading row -> [...]
Tensor gather_last(Tape& tape, const Tensor& x, std::span<const std::size_t> idx);

// Inverted dropout; identity when rate == 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace urw::num
