#include "gcvae/model.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "gcvae/errors.hpp"

namespace gcvae {
namespace {

enum class Init { kaiming, zero, one };

struct ParamSlot {
  std::string name;
  Shape shape;
  Init init;
  std::size_t fan_in = 0;
};

constexpr std::size_t kConvChannels[] = {64, 64, 32, 32};
constexpr std::size_t kUpconvChannels[] = {32, 32, 64, 64, 1};
constexpr std::size_t kDecoderSeedChannels = 50;  // FC 200 viewed as 50 x 2 x 2

void add_dense(std::vector<ParamSlot>& slots, const std::string& layer, std::size_t in, std::size_t out) {
  slots.push_back({layer + ".w", {in, out}, Init::kaiming, in});
  slots.push_back({layer + ".b", {out}, Init::zero});
}

void add_batchnorm(std::vector<ParamSlot>& slots, const std::string& layer, std::size_t channels) {
  slots.push_back({layer + ".gamma", {channels}, Init::one});
  slots.push_back({layer + ".beta", {channels}, Init::zero});
}

// Every trainable tensor of an architecture, in a fixed order so seeded init is reproducible.
std::vector<ParamSlot> parameter_slots(const ModelSpec& spec) {
  if (spec.latent_dim == 0) throw ContractError("latent_dim must be positive");
  if (spec.latent_dim >= spec.input_dim()) {
    throw ContractError("latent_dim " + std::to_string(spec.latent_dim) + " must be smaller than input dimension " +
                        std::to_string(spec.input_dim()));
  }
  const std::size_t k = spec.latent_dim;
  std::vector<ParamSlot> slots;
  if (spec.arch == Arch::mlp) {
    const std::size_t d = spec.input_dim();
    add_dense(slots, "enc.fc1", d, 400);
    add_dense(slots, "enc.fc2", 400, 200);
    add_dense(slots, "enc.fc3", 200, 2 * k);
    add_dense(slots, "dec.fc1", k, 200);
    add_dense(slots, "dec.fc2", 200, 400);
    add_dense(slots, "dec.fc3", 400, d);
    return slots;
  }

  if (spec.image_h != 64 || spec.image_w != 64) {
    throw ShapeError("conv64 architecture needs 64x64 images, got " + std::to_string(spec.image_h) + "x" +
                     std::to_string(spec.image_w));
  }
  const std::size_t kernel = spec.caption_mode ? 3 : 4;
  std::size_t in = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string idx = std::to_string(i + 1);
    const std::size_t out = kConvChannels[i];
    slots.push_back({"enc.conv" + idx + ".w", {out, in, kernel, kernel}, Init::kaiming, in * kernel * kernel});
    slots.push_back({"enc.conv" + idx + ".b", {out}, Init::zero});
    add_batchnorm(slots, "enc.bn" + idx, out);
    in = out;
  }
  add_dense(slots, "enc.fc1", 32 * 4 * 4, 200);
  add_dense(slots, "enc.fc2", 200, 25);
  add_dense(slots, "enc.fc3", 25, 2 * k);

  add_dense(slots, "dec.fc1", k, 25);
  add_dense(slots, "dec.fc2", 25, 200);
  in = kDecoderSeedChannels;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string idx = std::to_string(i + 1);
    const std::size_t out = kUpconvChannels[i];
    if (spec.caption_mode) {
      slots.push_back({"dec.conv" + idx + ".w", {out, in, 3, 3}, Init::kaiming, in * 9});
      slots.push_back({"dec.conv" + idx + ".b", {out}, Init::zero});
      if (i < 4) add_batchnorm(slots, "dec.bn" + idx, out);
    } else {
      slots.push_back({"dec.upconv" + idx + ".w", {in, out, 4, 4}, Init::kaiming, in * 16});
      slots.push_back({"dec.upconv" + idx + ".b", {out}, Init::zero});
    }
    in = out;
  }
  return slots;
}

ModelParams build_params(const ModelSpec& spec, bool zero, std::uint64_t seed) {
  ModelParams params;
  params.spec = spec;
  std::mt19937_64 rng(seed);
  for (const ParamSlot& slot : parameter_slots(spec)) {
    Tensor t(slot.shape);
    if (!zero) {
      if (slot.init == Init::kaiming) {
        const double bound = std::sqrt(6.0 / static_cast<double>(slot.fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : t.data()) v = dist(rng);
      } else if (slot.init == Init::one) {
        t.fill(1.0);
      }
    }
    auto& bucket = slot.name.starts_with("enc.") ? params.encoder : params.decoder;
    bucket.emplace(slot.name, std::move(t));
    if (slot.name.ends_with(".gamma")) {
      const std::string layer = slot.name.substr(0, slot.name.size() - 6);
      const std::size_t c = slot.shape[0];
      params.batchnorm.emplace(layer, ops::BatchNormStats{Tensor({c}, 0.0), Tensor({c}, 1.0)});
    }
  }
  return params;
}

Tensor meta_value(double v) { return Tensor({1}, std::vector<double>{v}); }

double meta_read(const NamedTensors& records, const std::string& key) {
  auto it = records.find(key);
  if (it == records.end() || it->second.numel() != 1) throw FormatError("checkpoint lacks record '" + key + "'");
  return it->second[0];
}

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::conv64 ? "conv64" : "mlp"; }

Arch parse_arch(const std::string& name) {
  if (name == "conv64") return Arch::conv64;
  if (name == "mlp") return Arch::mlp;
  throw ContractError("unknown architecture '" + name + "' (expected conv64 or mlp)");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : encoder) n += t.numel();
  for (const auto& [name, t] : decoder) n += t.numel();
  return n;
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) { return build_params(spec, false, seed); }

ModelParams zero_params(const ModelSpec& spec) { return build_params(spec, true, 0); }

NamedTensors to_checkpoint(const ModelParams& params) {
  NamedTensors out;
  out.emplace("meta.arch", meta_value(params.spec.arch == Arch::conv64 ? 0.0 : 1.0));
  out.emplace("meta.latent_dim", meta_value(static_cast<double>(params.spec.latent_dim)));
  out.emplace("meta.image_h", meta_value(static_cast<double>(params.spec.image_h)));
  out.emplace("meta.image_w", meta_value(static_cast<double>(params.spec.image_w)));
  out.emplace("meta.caption_mode", meta_value(params.spec.caption_mode ? 1.0 : 0.0));
  for (const auto& [name, t] : params.encoder) out.emplace(name, t);
  for (const auto& [name, t] : params.decoder) out.emplace(name, t);
  for (const auto& [layer, stats] : params.batchnorm) {
    out.emplace(layer + ".running_mean", stats.running_mean);
    out.emplace(layer + ".running_var", stats.running_var);
  }
  return out;
}

ModelParams from_checkpoint(const NamedTensors& records) {
  ModelSpec spec;
  spec.arch = meta_read(records, "meta.arch") == 0.0 ? Arch::conv64 : Arch::mlp;
  spec.latent_dim = static_cast<std::size_t>(meta_read(records, "meta.latent_dim"));
  spec.image_h = static_cast<std::size_t>(meta_read(records, "meta.image_h"));
  spec.image_w = static_cast<std::size_t>(meta_read(records, "meta.image_w"));
  spec.caption_mode = meta_read(records, "meta.caption_mode") != 0.0;

  ModelParams params = zero_params(spec);
  auto restore = [&records](const std::string& name, Tensor& dst) {
    auto it = records.find(name);
    if (it == records.end()) throw FormatError("checkpoint lacks record '" + name + "'");
    if (it->second.shape() != dst.shape()) {
      throw ShapeError("checkpoint record '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                       shape_str(dst.shape()));
    }
    dst = it->second;
  };
  for (auto& [name, t] : params.encoder) restore(name, t);
  for (auto& [name, t] : params.decoder) restore(name, t);
  for (auto& [layer, stats] : params.batchnorm) {
    restore(layer + ".running_mean", stats.running_mean);
    restore(layer + ".running_var", stats.running_var);
  }
  return params;
}

Tensor standard_normal(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

VaeGraph::VaeGraph(Tape& tape, ModelParams& params, bool track_gradients, bool training)
    : tape_(tape), params_(params), training_(training) {
  for (const NamedTensors* group : {&params.encoder, &params.decoder}) {
    for (const auto& [name, t] : *group) {
      vars_.emplace(name, track_gradients ? tape.parameter(t) : tape.constant(t));
    }
  }
}

Var VaeGraph::param(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("model has no parameter '" + name + "'");
  return it->second;
}

NamedTensors VaeGraph::named_gradients(const Gradients& grads) const {
  NamedTensors out;
  for (const auto& [name, var] : vars_) {
    auto it = grads.find(var.id());
    out.emplace(name, it != grads.end() ? it->second : Tensor(var.shape(), 0.0));
  }
  return out;
}

Var VaeGraph::dense(Var x, const std::string& layer) {
  return ops::bias_add(ops::matmul(x, param(layer + ".w")), param(layer + ".b"));
}

Var VaeGraph::conv_block(Var x, std::size_t index) {
  const std::string idx = std::to_string(index);
  const bool caption = params_.spec.caption_mode;
  Var h = ops::conv2d(x, param("enc.conv" + idx + ".w"), caption ? 1 : 2, 1);
  h = ops::bias_add(h, param("enc.conv" + idx + ".b"));
  h = ops::batchnorm2d(h, param("enc.bn" + idx + ".gamma"), param("enc.bn" + idx + ".beta"),
                       &params_.batchnorm.at("enc.bn" + idx), training_);
  h = ops::relu(h);
  return caption ? ops::maxpool2d(h, 2) : h;
}

Var VaeGraph::upconv_block(Var x, std::size_t index, bool last) {
  const std::string idx = std::to_string(index);
  Var h;
  if (params_.spec.caption_mode) {
    h = ops::conv2d(ops::upsample2x(x), param("dec.conv" + idx + ".w"), 1, 1);
    h = ops::bias_add(h, param("dec.conv" + idx + ".b"));
    if (last) return h;
    h = ops::batchnorm2d(h, param("dec.bn" + idx + ".gamma"), param("dec.bn" + idx + ".beta"),
                         &params_.batchnorm.at("dec.bn" + idx), training_);
  } else {
    h = ops::conv_transpose2d(x, param("dec.upconv" + idx + ".w"), 2, 1);
    h = ops::bias_add(h, param("dec.upconv" + idx + ".b"));
    if (last) return h;
  }
  return ops::relu(h);
}

VaeGraph::Posterior VaeGraph::encode(Var x) {
  const ModelSpec& spec = params_.spec;
  const Shape& xs = x.shape();
  const bool image = xs.size() == 4 && xs[1] == 1 && xs[2] == spec.image_h && xs[3] == spec.image_w;
  const bool flat = xs.size() == 2 && xs[1] == spec.input_dim();
  if (!image && !(flat && spec.arch == Arch::mlp)) {
    throw ShapeError("encode: input " + shape_str(xs) + " does not fit " + to_string(spec.arch) + " model for " +
                     std::to_string(spec.image_h) + "x" + std::to_string(spec.image_w) + " images");
  }
  const std::size_t batch = xs[0];
  const std::size_t k = spec.latent_dim;

  Var h;
  if (spec.arch == Arch::mlp) {
    h = flat ? x : ops::reshape(x, {batch, spec.input_dim()});
    h = ops::relu(dense(h, "enc.fc1"));
    h = ops::relu(dense(h, "enc.fc2"));
  } else {
    h = x;
    for (std::size_t i = 1; i <= 4; ++i) h = conv_block(h, i);
    h = ops::reshape(h, {batch, 32 * 4 * 4});
    h = ops::relu(dense(h, "enc.fc1"));
    h = ops::relu(dense(h, "enc.fc2"));
  }
  Var head = dense(h, "enc.fc3");
  return {ops::slice_cols(head, 0, k), ops::slice_cols(head, k, 2 * k)};
}

Var VaeGraph::decode(Var z) {
  const ModelSpec& spec = params_.spec;
  if (z.shape().size() != 2 || z.shape()[1] != spec.latent_dim) {
    throw ShapeError("decode: expected [B," + std::to_string(spec.latent_dim) + "] codes, got " + shape_str(z.shape()));
  }
  const std::size_t batch = z.shape()[0];
  if (spec.arch == Arch::mlp) {
    Var h = ops::relu(dense(z, "dec.fc1"));
    h = ops::relu(dense(h, "dec.fc2"));
    return ops::reshape(dense(h, "dec.fc3"), {batch, 1, spec.image_h, spec.image_w});
  }
  Var h = ops::relu(dense(z, "dec.fc1"));
  h = ops::relu(dense(h, "dec.fc2"));
  h = ops::reshape(h, {batch, kDecoderSeedChannels, 2, 2});
  for (std::size_t i = 1; i <= 5; ++i) h = upconv_block(h, i, i == 5);
  return h;
}

Var reparameterize(Var mu, Var log_var, std::uint64_t eps_seed) {
  return reparameterize_with_noise(mu, log_var, standard_normal(mu.shape(), eps_seed));
}

Var reparameterize_with_noise(Var mu, Var log_var, const Tensor& eps) {
  if (mu.shape() != log_var.shape() || eps.shape() != mu.shape()) {
    throw ShapeError("reparameterize: mu " + shape_str(mu.shape()) + ", log_var " + shape_str(log_var.shape()) +
                     ", eps " + shape_str(eps.shape()) + " must agree");
  }
  Var sigma = ops::exp(ops::scalar_mul(log_var, 0.5));
  return ops::add(mu, ops::mul(sigma, mu.tape().constant(eps)));
}

Var reconstruction_nll(Var x, Var logits) {
  if (x.shape() != logits.shape()) {
    throw ShapeError("reconstruction_nll: input " + shape_str(x.shape()) + " vs logits " + shape_str(logits.shape()));
  }
  // Every image has the same pixel count, so the mean over all elements equals the
  // batch mean of per-image pixel means.
  return ops::reduce_mean(ops::bce_with_logits(logits, x));
}

Var kl_gaussian_standard(Var mu, Var log_var) {
  if (mu.shape() != log_var.shape() || mu.shape().size() != 2) {
    throw ShapeError("kl_gaussian_standard: mu " + shape_str(mu.shape()) + " and log_var " +
                     shape_str(log_var.shape()) + " must be equal rank-2 shapes");
  }
  const double batch = static_cast<double>(mu.shape()[0]);
  Var terms = ops::sub(ops::add_scalar(ops::add(ops::square(mu), ops::exp(log_var)), -1.0), log_var);
  return ops::scalar_mul(ops::reduce_sum(terms), 0.5 / batch);
}

}  // namespace gcvae
