#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ncsc/checkpoint.hpp"
#include "ncsc/collaborative.hpp"
#include "ncsc/config.hpp"
#include "ncsc/data.hpp"
#include "ncsc/errors.hpp"
#include "ncsc/metrics.hpp"
#include "ncsc/network.hpp"
#include "ncsc/optim.hpp"

namespace ncsc {

// Raised when a loss turns non-finite; parameters are rolled back to the last
// finite state before it propagates.
class DivergenceError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t step = 0;
  double u = 0.0;
  LossBreakdown loss;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the state before any collaborative epoch
  std::optional<MetricsReport> metrics;
};

struct PretrainReport {
  std::vector<double> epoch_loss;  // mean per-batch 1/2 ||X - X_hat||^2 after each epoch
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

std::string training_log_header();
std::string training_log_row(const StepRecord& r);

class Trainer {
 public:
  // Fills the network input shape from `sample_shape` when the config leaves it
  // empty, validates the config and builds the network.
  Trainer(ExperimentConfig config, const Shape& sample_shape);

  const ExperimentConfig& config() const { return config_; }
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

  // Minimizes 1/2 ||X - X_hat||^2 with the decoder reading Z directly.
  PretrainReport pretrain(const Tensor& x);
  // Mean per-point squared reconstruction error of the plain autoencoder.
  double reconstruction_mse(const Tensor& x);

  // Fixed seeded partition of n points into batches of batch_size (last one may be smaller).
  const std::vector<std::vector<std::size_t>>& batches() const { return batches_; }
  void set_partition(std::size_t n);

  // One pass of the three stages on batch `index` of the partition.
  StepRecord train_batch(std::size_t index, const Tensor& xb);

  using StepSink = std::function<void(const StepRecord&)>;
  using EpochSink = std::function<void(const EpochRecord&)>;
  // Runs config().epochs epochs. Labels, when the dataset has them, are used
  // for the end-of-epoch evaluation only.
  std::vector<EpochRecord> fit(const Dataset& data, const StepSink& on_step = {}, const EpochSink& on_epoch = {});

  // encode -> classify; reads only encoder and classifier parameters.
  Tensor predict_proba(const Tensor& x);
  Labels predict(const Tensor& x);

  // Affinities of one stored batch: A_s from its coefficient matrix, A_c from the classifier.
  struct BatchAffinities {
    Tensor a_s;
    Tensor a_c;
    std::vector<std::size_t> rows;
  };
  BatchAffinities batch_affinities(std::size_t index, const Tensor& x);

  // Coefficient matrix of a batch (zeros before first use).
  Tensor& coefficients(std::size_t index);
  std::size_t epochs_done() const { return epoch_; }
  std::size_t steps_done() const { return step_; }

  NamedTensors state() const;
  void save(const std::filesystem::path& path) const;
  // Restores network parameters and any stored coefficient matrices.
  void load(const std::filesystem::path& path);
  void load_state(const NamedTensors& tensors);

 private:
  double current_u() const;
  ad::Adam& c_optimizer(std::size_t index);

  ExperimentConfig config_;
  nn::Network net_;
  ad::ParameterStore coeffs_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t partition_n_ = 0;
  ad::Adam opt_ae_;
  ad::Adam opt_cls_;
  std::map<std::size_t, ad::Adam> opt_c_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
};

std::string coefficient_name(std::size_t batch);

}  // namespace ncsc
