#include "ncsc/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "ncsc/affinity.hpp"
#include "ncsc/autodiff.hpp"
#include "ncsc/collaborative.hpp"
#include "ncsc/network.hpp"
#include "ncsc/rng.hpp"

namespace ncsc {

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Uniform in [-1, 1] with |x| >= margin.
Tensor away_from_zero(const Shape& shape, Rng& rng, double margin) {
  Tensor t(shape);
  for (auto& v : t.values()) {
    const double mag = rng.uniform(margin, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); }

struct Case {
  std::vector<Tensor> inputs;
  ad::OpAttrs attrs;
};

Case make_case(ad::OpKind kind, Rng& rng, double eps) {
  using ad::OpKind;
  const std::size_t m = pick(rng, 2, 4), n = pick(rng, 2, 4), p = pick(rng, 2, 4);
  Case c;
  switch (kind) {
    case OpKind::MatMul:
      c.inputs = {random_tensor({m, p}, rng), random_tensor({p, n}, rng)};
      break;
    case OpKind::Add:
    case OpKind::Subtract:
      // Alternate between same-shape and row-vector broadcast.
      if (rng.uniform() < 0.5) {
        c.inputs = {random_tensor({m, n}, rng), random_tensor({m, n}, rng)};
      } else {
        c.inputs = {random_tensor({m, n}, rng), random_tensor({n}, rng)};
      }
      break;
    case OpKind::Multiply:
      c.inputs = {random_tensor({m, n}, rng), random_tensor({m, n}, rng)};
      break;
    case OpKind::Relu:
    case OpKind::Abs:
      c.inputs = {away_from_zero({m, n}, rng, 10.0 * eps)};
      break;
    case OpKind::SoftmaxRows:
      c.inputs = {random_tensor({m, n}, rng, -3.0, 3.0)};
      break;
    case OpKind::L2NormalizeRows:
      c.inputs = {away_from_zero({m, n}, rng, 0.1)};
      break;
    case OpKind::Conv2d: {
      const std::size_t cin = pick(rng, 1, 2), cout = pick(rng, 1, 3), k = rng.uniform() < 0.5 ? 3 : 2;
      c.attrs.stride = pick(rng, 1, 2);
      c.attrs.padding = k / 2;
      c.inputs = {random_tensor({2, cin, 4, 4}, rng), random_tensor({cout, cin, k, k}, rng),
                  random_tensor({cout}, rng)};
      break;
    }
    case OpKind::ConvTranspose2d: {
      const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 2), k = 3;
      c.attrs.stride = pick(rng, 1, 2);
      c.attrs.padding = 1;
      c.attrs.output_padding = c.attrs.stride - 1;
      c.inputs = {random_tensor({2, cin, 3, 3}, rng), random_tensor({cin, cout, k, k}, rng),
                  random_tensor({cout}, rng)};
      break;
    }
    case OpKind::Reshape:
      c.inputs = {random_tensor({m, n}, rng)};
      c.attrs.shape = {n, m};
      break;
    case OpKind::Sum:
    case OpKind::Mean:
    case OpKind::FrobeniusNormSquared:
    case OpKind::Transpose:
      c.inputs = {random_tensor({m, n}, rng)};
      break;
    case OpKind::Log:
      c.inputs = {random_tensor({m, n}, rng, 0.5, 2.0)};
      break;
    case OpKind::ScalarMultiply:
      c.inputs = {random_tensor({m, n}, rng)};
      c.attrs.scalar = rng.uniform(-2.0, 2.0);
      break;
    case OpKind::Leaf:
      break;
  }
  return c;
}

}  // namespace

std::vector<GradCheckResult> run_op_gradient_suite(std::uint64_t seed, std::size_t instances, double eps) {
  using ad::OpKind;
  const OpKind kinds[] = {OpKind::MatMul, OpKind::Add, OpKind::Subtract, OpKind::Multiply, OpKind::Relu,
                          OpKind::SoftmaxRows, OpKind::L2NormalizeRows, OpKind::Conv2d, OpKind::ConvTranspose2d,
                          OpKind::Reshape, OpKind::Sum, OpKind::Mean, OpKind::FrobeniusNormSquared, OpKind::Log,
                          OpKind::ScalarMultiply, OpKind::Transpose, OpKind::Abs};
  std::vector<GradCheckResult> out;
  Rng rng(seed);
  for (OpKind kind : kinds) {
    GradCheckResult res{std::string(ad::to_string(kind)), instances, 0.0};
    for (std::size_t inst = 0; inst < instances; ++inst) {
      Case c = make_case(kind, rng, eps);
      ad::ParameterStore store;
      std::vector<ad::Parameter*> params;
      for (std::size_t i = 0; i < c.inputs.size(); ++i) params.push_back(&store.add("in" + std::to_string(i), c.inputs[i]));
      // Project the output on a fixed random tensor so every output coordinate matters.
      std::vector<const Tensor*> raw;
      for (auto* q : params) raw.push_back(&q->value());
      const Tensor probe_shape = ad::forward_op(kind, raw, c.attrs);
      const Tensor weights = random_tensor(probe_shape.shape(), rng);
      auto build = [&](ad::Graph& g) {
        std::vector<ad::Var> vars;
        for (auto* q : params) vars.push_back(g.parameter(*q));
        ad::Var y = g.apply(kind, vars, c.attrs);
        return ad::sum(ad::multiply(y, g.constant(weights)));
      };
      for (auto* q : params) res.max_error = std::max(res.max_error, ad::grad_check(build, *q, eps));
    }
    out.push_back(std::move(res));
  }
  return out;
}

GradCheckResult run_network_gradient_check(std::uint64_t seed, double eps) {
  Rng rng(seed);
  const std::size_t n = 6, f = 5, k = 2;
  nn::NetworkConfig cfg;
  cfg.input_shape = {f};
  cfg.num_clusters = k;
  cfg.intrinsic_dim_guess = 2;
  auto dense = [](std::size_t units, nn::Activation act) {
    nn::LayerSpec s;
    s.kind = nn::LayerKind::Dense;
    s.channels_or_units = units;
    s.activation = act;
    return s;
  };
  cfg.encoder = {dense(7, nn::Activation::Relu), dense(4, nn::Activation::None)};
  cfg.decoder = {dense(7, nn::Activation::Relu), dense(f, nn::Activation::None)};
  cfg.classifier_head = {dense(5, nn::Activation::Relu)};
  nn::Network net(cfg, seed);

  Tensor x = random_tensor({n, f}, rng);
  Tensor c0 = random_tensor({n, n}, rng, -0.5, 0.5);
  nn::project_zero_diagonal(c0);
  ad::Parameter& c = net.parameters().add("self_expressive.C", c0);

  // Fixed teacher affinity with both confident and uncertain pairs.
  Tensor a_s({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a_s.at(i, j) = i == j ? 1.0 : ((i % 2 == j % 2) ? 0.95 : 0.02);
  }
  // Perturbing C's diagonal would break the zero-diagonal precondition, so the
  // graph masks it; both gradients of the diagonal are then exactly zero.
  Tensor offdiag({n, n}, 1.0);
  nn::project_zero_diagonal(offdiag);
  CollaborativeOptions opt;
  opt.u = 0.7;
  opt.l = 0.1;

  auto build = [&](ad::Graph& g) {
    ad::Var xv = g.constant(x);
    ad::Var z = net.encode(g, xv);
    ad::Var cv = ad::multiply(g.parameter(c), g.constant(offdiag));
    ad::Var zc = nn::self_express(z, cv);
    auto sub = subspace_loss(z, cv, zc, xv, net.decode(g, zc), 10.0);
    ad::Var a_c = class_affinity(net.classify(g, z));
    auto t = collaborative_terms(g, g.constant(a_s), a_c, opt);
    return ad::add(sub.total, ad::add(t.l_pos, t.l_sep));
  };
  GradCheckResult res{"network", 1, 0.0};
  for (auto* p : net.parameters().all()) res.max_error = std::max(res.max_error, ad::grad_check(build, *p, eps));
  return res;
}

}  // namespace ncsc
