#pragma once

#include <cstddef>

#include "gcvae/tape.hpp"
#include "gcvae/tensor.hpp"

/// Differentiable primitives. Every function appends one node to the tape of its
/// first operand. Broadcasting is limited to rank-0 scalars in the binary ops and
/// per-channel bias in bias_add.
namespace gcvae::ops {

// Linear algebra and convolution ---------------------------------------------

/// [n,k] x [k,m] -> [n,m]
Var matmul(Var a, Var b);

/// x [N,C,H,W], w [O,C,kh,kw] -> [N,O,(H+2p-kh)/s+1,(W+2p-kw)/s+1]
Var conv2d(Var x, Var w, std::size_t stride, std::size_t pad);

/// Adjoint of conv2d with the same weight tensor.
/// x [N,Ci,H,W], w [Ci,Co,kh,kw] -> [N,Co,(H-1)s-2p+kh,(W-1)s-2p+kw]
Var conv_transpose2d(Var x, Var w, std::size_t stride, std::size_t pad);

/// Non-overlapping window max. Gradient goes to the first maximal element in scan order.
Var maxpool2d(Var x, std::size_t window = 2);

/// Nearest-neighbour 2x spatial upsampling.
Var upsample2x(Var x);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
};

/// Per-channel normalization of [N,C,H,W]. In training mode uses batch statistics
/// and, if `stats` is given, folds them into the running averages
/// (running = momentum * running + (1 - momentum) * batch, unbiased variance).
/// In evaluation mode normalizes with `stats`, which is then required.
Var batchnorm2d(Var x, Var gamma, Var beta, BatchNormStats* stats, bool training, double momentum = 0.9,
                double eps = 1e-5);

// Elementwise ------------------------------------------------------------------

Var relu(Var x);
Var sigmoid(Var x);
Var exp(Var x);
/// Throws DomainError on any non-positive element.
Var log(Var x);
Var square(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Throws DomainError on any zero divisor.
Var div(Var a, Var b);
Var scalar_mul(Var x, double s);
Var add_scalar(Var x, double s);

/// x [N,C] or [N,C,H,W] plus b [C] along axis 1.
Var bias_add(Var x, Var b);

/// Elementwise binary cross-entropy between logits and targets in [0,1]:
/// max(z,0) - z*t + log(1 + exp(-|z|)). Throws DomainError for targets outside [0,1].
Var bce_with_logits(Var logits, Var targets);

// Reductions and layout ----------------------------------------------------------

/// Sum of all elements as a rank-0 tensor.
Var reduce_sum(Var x);
Var reduce_mean(Var x);
Var reshape(Var x, Shape shape);

/// Columns [begin, end) of a rank-2 tensor.
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Stacks [n,k] over [m,k] -> [n+m,k].
Var concat_rows(Var a, Var b);
/// D[i][j] = ||a_i - b_j||^2 for a [n,k], b [m,k].
Var pairwise_sqdist(Var a, Var b);

}  // namespace gcvae::ops
