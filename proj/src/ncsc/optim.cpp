#include "ncsc/optim.hpp"

#include <cmath>

#include "ncsc/errors.hpp"

namespace ncsc::ad {

Adam::Adam(AdamOptions options) : options_(options) {
  if (!(options_.lr >= 0.0) || !(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 >= 0.0 && options_.beta2 < 1.0) || !(options_.eps > 0.0)) {
    throw ValidationError("invalid Adam options");
  }
}

void Adam::step(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad().shape() != p->value().shape()) {
      throw ValidationError("gradient shape " + shape_string(p->grad().shape()) +
                            " does not match parameter '" + p->name() + "' " +
                            shape_string(p->value().shape()));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name());
    Moments& mo = it->second;
    if (inserted || mo.m.shape() != p->value().shape()) {
      mo.m = Tensor(p->value().shape());
      mo.v = Tensor(p->value().shape());
    }
    Tensor& w = p->value();
    const Tensor& g = p->grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mo.m[i] = options_.beta1 * mo.m[i] + (1.0 - options_.beta1) * g[i];
      mo.v[i] = options_.beta2 * mo.v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / c1;
      const double vhat = mo.v[i] / c2;
      w[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

const Adam::Moments* Adam::moments(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second;
}

}  // namespace ncsc::ad
