#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "gcvae/checkpoint.hpp"
#include "gcvae/ops.hpp"
#include "gcvae/tape.hpp"

namespace gcvae {

enum class Arch { conv64, mlp };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& name);

/// Static description of a network. conv64 requires 64x64 single-channel images.
///
/// conv64 encoder: 4 x (4x4 conv, stride 2, pad 1, batchnorm, relu) with channels 64,64,32,32,
///   flatten 32*4*4, FC 200 relu, FC 25 relu, FC 2k.
/// conv64 decoder: FC 25 relu, FC 200 relu, reshape 50x2x2,
///   4 x (4x4 upconv, stride 2, pad 1, relu) with channels 32,32,64,64, 4x4 upconv to 1 channel.
/// With `caption_mode` each encoder block is 3x3 conv + batchnorm + relu + 2x2 maxpool, and each
///   decoder block is 2x upsample + 3x3 conv (+ batchnorm + relu except the last); the FC
///   widths and spatial sizes are the same as the default.
/// mlp: d -> 400 -> 200 -> 2k encoder, k -> 200 -> 400 -> d decoder, relu activations.
struct ModelSpec {
  Arch arch = Arch::mlp;
  std::size_t latent_dim = 10;
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  bool caption_mode = false;

  std::size_t input_dim() const { return image_h * image_w; }
};

/// Encoder weights (phi, names "enc.*"), decoder weights (theta, names "dec.*") and
/// batchnorm running statistics keyed by layer name ("enc.bn1", ...).
struct ModelParams {
  ModelSpec spec;
  NamedTensors encoder;
  NamedTensors decoder;
  std::map<std::string, ops::BatchNormStats> batchnorm;

  std::size_t parameter_count() const;
};

/// Kaiming-uniform fan-in weights, zero biases, unit batchnorm scale.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);
/// Every weight, bias and batchnorm scale set to zero.
ModelParams zero_params(const ModelSpec& spec);

/// Flattens params plus "meta.*" records describing the spec into checkpoint form.
NamedTensors to_checkpoint(const ModelParams& params);
ModelParams from_checkpoint(const NamedTensors& records);

/// Standard normal draws from a seeded generator.
Tensor standard_normal(const Shape& shape, std::uint64_t seed);

/// A model bound to one tape. Parameters become tape leaves on construction; they are
/// gradient-tracked when `track_gradients` is set. In training mode batchnorm uses batch
/// statistics and updates the running averages stored in `params`.
class VaeGraph {
 public:
  VaeGraph(Tape& tape, ModelParams& params, bool track_gradients, bool training);

  struct Posterior {
    Var mu;
    Var log_var;
  };

  /// x is [B,1,H,W] (or [B,d] for mlp); returns mu and log_var, each [B,k].
  Posterior encode(Var x);
  /// z is [B,k]; returns Bernoulli logits [B,1,H,W].
  Var decode(Var z);

  Var param(const std::string& name) const;
  const std::map<std::string, Var>& bound() const { return vars_; }

  /// Gradients of the bound parameters, keyed by parameter name.
  NamedTensors named_gradients(const Gradients& grads) const;

 private:
  Var dense(Var x, const std::string& layer);
  Var conv_block(Var x, std::size_t index);
  Var upconv_block(Var x, std::size_t index, bool last);

  Tape& tape_;
  ModelParams& params_;
  bool training_;
  std::map<std::string, Var> vars_;
};

/// z = mu + exp(0.5 * log_var) * eps with eps ~ N(0, I) drawn from `eps_seed`.
Var reparameterize(Var mu, Var log_var, std::uint64_t eps_seed);
/// Same map with caller-supplied noise.
Var reparameterize_with_noise(Var mu, Var log_var, const Tensor& eps);

/// Mean over the batch of the per-pixel-averaged Bernoulli negative log-likelihood.
/// Throws DomainError if any target pixel lies outside [0,1].
Var reconstruction_nll(Var x, Var logits);

/// Mean over the batch of 0.5 * sum_j (mu^2 + exp(log_var) - 1 - log_var).
Var kl_gaussian_standard(Var mu, Var log_var);

}  // namespace gcvae
