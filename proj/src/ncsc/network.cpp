#include "ncsc/network.hpp"

#include <cmath>

#include "ncsc/errors.hpp"
#include "ncsc/rng.hpp"

namespace ncsc::nn {

namespace {

bool is_spatial(const Shape& s) { return s.size() == 3; }

std::string layer_where(const std::string& name) { return "layer '" + name + "'"; }

// Resolves per-sample shapes through a stack. `transpose_targets` lists the
// spatial sizes conv-transpose layers should hit, consumed in order; the
// output padding is chosen to reach them.
std::vector<ResolvedLayer> resolve_stack(const std::vector<LayerSpec>& specs, Shape shape,
                                         const std::string& prefix,
                                         std::vector<std::size_t> transpose_targets = {}) {
  std::vector<ResolvedLayer> out;
  std::size_t next_target = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    ResolvedLayer layer;
    layer.spec = spec;
    layer.name = prefix + std::to_string(i);
    layer.in_shape = shape;
    if (spec.channels_or_units == 0 || spec.stride == 0 || spec.kernel_size == 0) {
      throw ValidationError(layer_where(layer.name) +
                            ": kernel_size, stride and channels_or_units must be >= 1");
    }
    switch (spec.kind) {
      case LayerKind::Dense:
        layer.out_shape = {spec.channels_or_units};
        break;
      case LayerKind::Conv: {
        if (!is_spatial(shape)) {
          throw ValidationError(layer_where(layer.name) + ": conv needs a [channels, height, width] input, got " +
                                shape_string(shape));
        }
        layer.padding = spec.padding.value_or(spec.kernel_size / 2);
        const std::size_t k = spec.kernel_size, p = layer.padding, s = spec.stride;
        if (shape[1] + 2 * p < k || shape[2] + 2 * p < k) {
          throw ValidationError(layer_where(layer.name) + ": kernel larger than padded input " +
                                shape_string(shape));
        }
        layer.out_shape = {spec.channels_or_units, ad::conv_output_size(shape[1], k, s, p),
                           ad::conv_output_size(shape[2], k, s, p)};
        break;
      }
      case LayerKind::ConvTranspose: {
        if (!is_spatial(shape)) {
          throw ValidationError(layer_where(layer.name) +
                                ": conv-transpose needs a [channels, height, width] input, got " +
                                shape_string(shape));
        }
        layer.padding = spec.padding.value_or(spec.kernel_size / 2);
        const std::size_t k = spec.kernel_size, p = layer.padding, s = spec.stride;
        const std::size_t base = (shape[1] - 1) * s + k;
        if (base <= 2 * p) {
          throw ValidationError(layer_where(layer.name) + ": padding too large");
        }
        std::size_t h = base - 2 * p;
        if (next_target < transpose_targets.size()) {
          const std::size_t target = transpose_targets[next_target++];
          if (target >= h && target - h < s) layer.output_padding = target - h;
        }
        h += layer.output_padding;
        const std::size_t w = (shape[2] - 1) * s + k - 2 * p + layer.output_padding;
        layer.out_shape = {spec.channels_or_units, h, w};
        break;
      }
    }
    shape = layer.out_shape;
    out.push_back(std::move(layer));
  }
  return out;
}

void add_layer_parameters(ad::ParameterStore& store, const ResolvedLayer& layer, Rng& rng) {
  Shape wshape;
  std::size_t fan_in = 0;
  const std::size_t k = layer.spec.kernel_size;
  const std::size_t units = layer.spec.channels_or_units;
  switch (layer.spec.kind) {
    case LayerKind::Dense:
      fan_in = numel(layer.in_shape);
      wshape = {fan_in, units};
      break;
    case LayerKind::Conv:
      fan_in = layer.in_shape[0] * k * k;
      wshape = {units, layer.in_shape[0], k, k};
      break;
    case LayerKind::ConvTranspose:
      fan_in = units * k * k;
      wshape = {layer.in_shape[0], units, k, k};
      break;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w(wshape);
  for (auto& v : w.values()) v = rng.uniform(-bound, bound);
  Tensor b({units});
  for (auto& v : b.values()) v = rng.uniform(-bound, bound);
  store.add(layer.name + ".weight", std::move(w));
  store.add(layer.name + ".bias", std::move(b));
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ConvTranspose: return "conv-transpose";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

std::string to_string(Activation act) { return act == Activation::Relu ? "relu" : "none"; }

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "conv-transpose") return LayerKind::ConvTranspose;
  if (s == "dense") return LayerKind::Dense;
  throw ValidationError("unknown layer kind '" + s + "' (expected conv, conv-transpose or dense)");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "none") return Activation::None;
  throw ValidationError("unknown activation '" + s + "' (expected relu or none)");
}

Network::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  const Shape& input = config_.input_shape;
  if (input.size() != 1 && input.size() != 3) {
    throw ValidationError("network.input_shape must be [features] or [channels, height, width], got " +
                          shape_string(input));
  }
  for (auto d : input) {
    if (d == 0) throw ValidationError("network.input_shape has a zero dimension");
  }
  if (config_.num_clusters < 2) {
    throw ValidationError("network.num_clusters must be >= 2, got " + std::to_string(config_.num_clusters));
  }
  if (config_.encoder.empty()) throw ValidationError("network.encoder has no layers");
  if (config_.decoder.empty()) throw ValidationError("network.decoder has no layers");

  encoder_ = resolve_stack(config_.encoder, input, "encoder.");
  latent_shape_ = encoder_.back().out_shape;

  const std::size_t needed = config_.intrinsic_dim_guess * config_.num_clusters;
  if (latent_dim() < needed) {
    throw ValidationError("latent_dim " + std::to_string(latent_dim()) +
                          " is below intrinsic_dim_guess x num_clusters = " + std::to_string(needed));
  }

  // Mirror the encoder: conv-transpose layers aim for the encoder's conv input sizes in reverse.
  std::vector<std::size_t> targets;
  for (auto it = encoder_.rbegin(); it != encoder_.rend(); ++it) {
    if (it->spec.kind == LayerKind::Conv) targets.push_back(it->in_shape[1]);
  }
  decoder_ = resolve_stack(config_.decoder, latent_shape_, "decoder.", targets);
  const Shape& recon = decoder_.back().out_shape;
  const bool same = is_spatial(input) ? recon == input : numel(recon) == input[0];
  if (!same) {
    throw ValidationError("decoder output " + shape_string(recon) + " does not match input shape " +
                          shape_string(input));
  }

  auto head = config_.classifier_head;
  LayerSpec out;
  out.kind = LayerKind::Dense;
  out.channels_or_units = config_.num_clusters;
  out.activation = Activation::None;
  head.push_back(out);
  classifier_ = resolve_stack(head, latent_shape_, "classifier.");
  classifier_.back().name = "classifier.out";

  Rng rng(seed);
  for (const auto* stack : {&encoder_, &decoder_, &classifier_}) {
    for (const auto& layer : *stack) add_layer_parameters(params_, layer, rng);
  }
}

std::size_t Network::input_features() const { return numel(config_.input_shape); }
std::size_t Network::latent_dim() const { return numel(latent_shape_); }

std::vector<ad::Parameter*> Network::autoencoder_parameters() {
  auto out = encoder_parameters();
  for (auto* p : decoder_parameters()) out.push_back(p);
  return out;
}

ad::Var Network::run_stack(ad::Graph& g, ad::Var x, const std::vector<ResolvedLayer>& layers) {
  const std::size_t n = x.shape()[0];
  for (const auto& layer : layers) {
    ad::Var w = g.parameter(params_.at(layer.name + ".weight"));
    ad::Var b = g.parameter(params_.at(layer.name + ".bias"));
    Shape want{n};
    if (layer.spec.kind == LayerKind::Dense) {
      want.push_back(numel(layer.in_shape));
    } else {
      want.insert(want.end(), layer.in_shape.begin(), layer.in_shape.end());
    }
    if (x.shape() != want) x = ad::reshape(x, want);
    switch (layer.spec.kind) {
      case LayerKind::Dense:
        x = ad::add(ad::matmul(x, w), b);
        break;
      case LayerKind::Conv:
        x = ad::conv2d(x, w, b, layer.spec.stride, layer.padding);
        break;
      case LayerKind::ConvTranspose:
        x = ad::conv_transpose2d(x, w, b, layer.spec.stride, layer.padding, layer.output_padding);
        break;
    }
    if (layer.spec.activation == Activation::Relu) x = ad::relu(x);
  }
  return x;
}

ad::Var Network::encode(ad::Graph& g, ad::Var x) {
  if (x.shape().size() != 2 || x.shape()[1] != input_features()) {
    throw ValidationError("encode expects [n, " + std::to_string(input_features()) + "], got " +
                          shape_string(x.shape()));
  }
  const std::size_t n = x.shape()[0];
  ad::Var z = run_stack(g, x, encoder_);
  if (z.shape() != Shape{n, latent_dim()}) z = ad::reshape(z, {n, latent_dim()});
  return z;
}

ad::Var Network::decode(ad::Graph& g, ad::Var zc) {
  if (zc.shape().size() != 2 || zc.shape()[1] != latent_dim()) {
    throw ValidationError("decode expects [n, " + std::to_string(latent_dim()) + "], got " +
                          shape_string(zc.shape()));
  }
  const std::size_t n = zc.shape()[0];
  ad::Var xh = run_stack(g, zc, decoder_);
  if (xh.shape() != Shape{n, input_features()}) xh = ad::reshape(xh, {n, input_features()});
  return xh;
}

ad::Var Network::classifier_logits(ad::Graph& g, ad::Var z) {
  if (z.shape().size() != 2 || z.shape()[1] != latent_dim()) {
    throw ValidationError("classify expects [n, " + std::to_string(latent_dim()) + "], got " +
                          shape_string(z.shape()));
  }
  return run_stack(g, z, classifier_);
}

ad::Var Network::classify(ad::Graph& g, ad::Var z) {
  return ad::l2_normalize_rows(ad::softmax_rows(classifier_logits(g, z)));
}

ad::Var self_express(ad::Var z, ad::Var c) {
  const Tensor& cv = c.value();
  const std::size_t n = z.shape().at(0);
  if (cv.rank() != 2 || cv.dim(0) != n || cv.dim(1) != n) {
    throw ValidationError("self-expressive coefficients must be [" + std::to_string(n) + "x" +
                          std::to_string(n) + "], got " + shape_string(cv.shape()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cv.at(i, i) != 0.0) {
      throw ValidationError("self-expressive coefficients have a nonzero diagonal at " + std::to_string(i));
    }
  }
  return ad::matmul(ad::transpose(c), z);
}

void project_zero_diagonal(Tensor& c) {
  if (c.rank() != 2 || c.dim(0) != c.dim(1)) {
    throw ValidationError("diagonal projection needs a square matrix, got " + shape_string(c.shape()));
  }
  for (std::size_t i = 0; i < c.dim(0); ++i) c.at(i, i) = 0.0;
}

}  // namespace ncsc::nn
