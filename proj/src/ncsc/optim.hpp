#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "ncsc/autodiff.hpp"

namespace ncsc::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name, so one
// optimizer can serve a fixed group of parameters across many graphs.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  // One update of every listed parameter from its accumulated grad; step() += 1.
  void step(std::span<Parameter* const> params);

  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

  struct Moments {
    Tensor m;
    Tensor v;
  };
  const Moments* moments(const std::string& name) const;

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace ncsc::ad
