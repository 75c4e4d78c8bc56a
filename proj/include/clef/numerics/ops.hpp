#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "clef/numerics/graph.hpp"

namespace clef::num {

// Binary elementwise ops accept b with the same shape as a, a single row
// broadcast over a's rows, or a 1x1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var neg(Var a);

Var matmul(Var a, Var b);
// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);

Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
// log(sigmoid(x)) evaluated as min(x, 0) - log1p(exp(-|x|)).
Var log_sigmoid(Var a);
Var relu(Var a);
// x * sigmoid(1.702 x)
Var quick_gelu(Var a);

// axis 0 reduces rows (result 1 x cols), axis 1 reduces columns (rows x 1).
Var sum(Var a, int axis);
Var mean(Var a, int axis);
Var sum_all(Var a);
Var mean_all(Var a);

Var layer_norm(Var x, Var gain, Var bias, float eps = 1e-5f);

// Rows scaled to unit Euclidean norm. Throws ZeroRow when a row norm is <= 1e-12.
Var l2_normalize_rows(Var x);

// Per-row log-sum-exp over the entries where valid[r * cols + c] != 0,
// stabilized by the row maximum. Result is rows x 1. Rows without any valid
// entry throw EmptyValidRow.
Var masked_logsumexp_rows(Var x, std::span<const std::uint8_t> valid);

// Per-row sum_j w[r, j] * (logsumexp over valid entries - x[r, j]): the
// cross-entropy against soft targets, evaluated in double on max-shifted
// logits so a per-row shift cancels exactly. Rows with zero weight give 0.
Var soft_target_nll_rows(Var x, std::span<const std::uint8_t> valid, std::span<const float> weights);

// Multi-head scaled dot-product attention over packed sequences.
// qkv: (batch * seq) x (3 * width), laid out [q | k | v] per row.
// key_valid: batch * seq flags; keys with flag 0 receive no attention weight.
// Returns (batch * seq) x width.
Var attention(Var qkv, std::size_t seq_len, std::size_t heads, std::span<const std::uint8_t> key_valid);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, float s) { return scale(a, s); }
inline Var operator*(float s, Var a) { return scale(a, s); }

}  // namespace clef::num
