#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncsc/collaborative.hpp"
#include "ncsc/network.hpp"

namespace ncsc {

struct USchedule {
  double initial = 0.7;
  double after_first_epoch = 0.9;
};

struct ExperimentConfig {
  nn::NetworkConfig network;
  double lambda1 = 10.0;
  double lambda_cl = 1.0;
  USchedule u_schedule;
  double l = 0.1;
  AlphaMode alpha_mode;
  std::size_t batch_size = 150;
  std::size_t epochs = 30;
  std::size_t pretrain_epochs = 60;
  double lr_pretrain = 1e-3;
  double lr_ae = 1e-5;
  double lr_other = 1e-3;
  std::size_t inner_se_steps = 20;
  std::size_t classifier_steps = 10;
  // Weight of the classifier separation term relative to the collaborative loss; 0 disables it.
  double separation_weight = 0.3;
  std::uint64_t seed = 0;
  bool soft_mask = true;
  bool teacher_gradient = false;
  bool reinit_c = false;

  // Applies one key=value pair; unknown keys and malformed values are rejected
  // with the key named.
  void set(const std::string& key, const std::string& value);
  // Rejects inconsistent settings. The network's input shape may still be
  // empty here; it is filled from the dataset.
  void validate() const;
  // Flat key=value text that set() reads back to an identical config.
  std::string to_text() const;

  CollaborativeOptions collaborative_options(double u) const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key set() accepts, with layer keys shown as network.<stack>.<i>.<field>.
std::vector<std::string> config_keys();

}  // namespace ncsc
