#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ncsc/autodiff.hpp"

namespace ncsc::nn {

enum class LayerKind { Conv, ConvTranspose, Dense };
enum class Activation { Relu, None };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t channels_or_units = 1;
  Activation activation = Activation::Relu;
  // Zero padding for conv kinds; "same"-style kernel_size / 2 when unset.
  std::optional<std::size_t> padding;
};

struct NetworkConfig {
  // Per-sample input shape: {features} for dense data, {channels, height, width} for images.
  Shape input_shape;
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
  // Hidden classifier layers; a dense layer to num_clusters logits is always appended.
  std::vector<LayerSpec> classifier_head;
  std::size_t num_clusters = 2;
  std::size_t intrinsic_dim_guess = 9;
};

// A layer after shape resolution: concrete padding and per-sample shapes.
struct ResolvedLayer {
  LayerSpec spec;
  std::string name;
  Shape in_shape;
  Shape out_shape;
  std::size_t padding = 0;
  std::size_t output_padding = 0;
};

// Encoder, decoder and classifier head over one parameter store.
//
// Tensors crossing the public surface are matrices with one sample per row:
// inputs and reconstructions are [n, features], latents are [n, latent_dim].
class Network {
 public:
  // Validates the configuration (shape closure, latent dimension rule) and
  // initializes weights uniformly in +-1/sqrt(fan_in) from `seed`.
  Network(NetworkConfig config, std::uint64_t seed);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkConfig& config() const { return config_; }
  std::size_t input_features() const;
  std::size_t latent_dim() const;
  const Shape& latent_shape() const { return latent_shape_; }
  std::size_t num_clusters() const { return config_.num_clusters; }

  ad::Var encode(ad::Graph& g, ad::Var x);
  ad::Var decode(ad::Graph& g, ad::Var zc);
  ad::Var classifier_logits(ad::Graph& g, ad::Var z);
  // Softmax outputs, each row then scaled to unit l2 norm.
  ad::Var classify(ad::Graph& g, ad::Var z);

  ad::ParameterStore& parameters() { return params_; }
  const ad::ParameterStore& parameters() const { return params_; }
  std::vector<ad::Parameter*> encoder_parameters() { return params_.with_prefix("encoder."); }
  std::vector<ad::Parameter*> decoder_parameters() { return params_.with_prefix("decoder."); }
  std::vector<ad::Parameter*> classifier_parameters() { return params_.with_prefix("classifier."); }
  std::vector<ad::Parameter*> autoencoder_parameters();

  const std::vector<ResolvedLayer>& encoder_layers() const { return encoder_; }
  const std::vector<ResolvedLayer>& decoder_layers() const { return decoder_; }
  const std::vector<ResolvedLayer>& classifier_layers() const { return classifier_; }

 private:
  ad::Var run_stack(ad::Graph& g, ad::Var x, const std::vector<ResolvedLayer>& layers);

  NetworkConfig config_;
  Shape latent_shape_;
  std::vector<ResolvedLayer> encoder_;
  std::vector<ResolvedLayer> decoder_;
  std::vector<ResolvedLayer> classifier_;
  ad::ParameterStore params_;
};

// Self-expressive layer under the points-as-rows layout: row i of the result is
// sum_j C(j, i) z_j, i.e. C^T Z. C must be square with side n and a zero diagonal.
ad::Var self_express(ad::Var z, ad::Var c);

// Sets the diagonal of a square matrix to exactly zero.
void project_zero_diagonal(Tensor& c);

}  // namespace ncsc::nn
