#include "ncsc/collaborative.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "ncsc/errors.hpp"
#include "ncsc/network.hpp"

namespace ncsc {

namespace {

void expect_pair(const Tensor& a_s, const Tensor& a_c) {
  if (a_s.rank() != 2 || a_s.dim(0) != a_s.dim(1)) {
    throw ValidationError("A_s must be square, got " + shape_string(a_s.shape()));
  }
  if (a_c.shape() != a_s.shape()) {
    throw ValidationError("A_c shape " + shape_string(a_c.shape()) + " differs from A_s " +
                          shape_string(a_s.shape()));
  }
}

void validate_thresholds(double u, double l) {
  if (!(l > 0.0 && l < 1.0) || !(u > 0.0 && u < 1.0)) {
    throw ValidationError("thresholds must lie in (0, 1), got u=" + std::to_string(u) + " l=" + std::to_string(l));
  }
  if (u <= l) {
    throw ValidationError("threshold u must exceed l, got u=" + std::to_string(u) + " l=" + std::to_string(l));
  }
}

// Mean over `count` selected entries of -(weight * log(max(x, floor))); weight is zero off the mask.
ad::Var masked_neglog_mean(ad::Graph& g, ad::Var weight, ad::Var x, std::size_t count) {
  if (count == 0) return g.constant(Tensor::scalar(0.0));
  ad::Var nl = ad::scale(ad::log(x, kLogClamp), -1.0);
  return ad::scale(ad::sum(ad::multiply(weight, nl)), 1.0 / static_cast<double>(count));
}

bool any_clamped(const Tensor& mask, const Tensor& x) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && x[i] < kLogClamp) return true;
  }
  return false;
}

Tensor ones_like(const Tensor& t) { return Tensor(t.shape(), 1.0); }

}  // namespace

ConfidenceMasks build_masks(const Tensor& a_s, const Tensor& a_c, double u, double l) {
  expect_pair(a_s, a_c);
  validate_thresholds(u, l);
  const std::size_t n = a_s.dim(0);
  ConfidenceMasks m{Tensor({n, n}), Tensor({n, n}), u, l, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (a_s.at(i, j) > u) {
        m.positive.at(i, j) = 1.0;
        ++m.count_pos;
      }
      if (a_c.at(i, j) < l) {
        m.negative.at(i, j) = 1.0;
        ++m.count_neg;
      }
    }
  }
  return m;
}

double collaboration_rate(const ConfidenceMasks& masks) {
  return static_cast<double>(std::max<std::size_t>(masks.count_pos, 1)) /
         static_cast<double>(std::max<std::size_t>(masks.count_neg, 1));
}

AlphaMode AlphaMode::parse(const std::string& text) {
  if (text == "auto-ratio") return {};
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string num = text.substr(prefix.size());
    char* end = nullptr;
    const double v = std::strtod(num.c_str(), &end);
    if (!num.empty() && end == num.c_str() + num.size() && std::isfinite(v) && v > 0.0) return {false, v};
  }
  throw ValidationError("alpha_mode must be 'auto-ratio' or 'fixed:<positive number>', got '" + text + "'");
}

std::string AlphaMode::to_string() const {
  if (automatic) return "auto-ratio";
  char buf[48];
  std::snprintf(buf, sizeof buf, "fixed:%.17g", fixed);
  return buf;
}

CollaborativeTerms collaborative_terms(ad::Graph& g, ad::Var a_s, ad::Var a_c, const CollaborativeOptions& opt) {
  const Tensor as = a_s.value();
  const Tensor ac = a_c.value();
  const ConfidenceMasks masks = build_masks(as, ac, opt.u, opt.l);
  const std::size_t n = as.dim(0);

  CollaborativeTerms t;
  t.count_pos = masks.count_pos;
  t.count_neg = masks.count_neg;
  t.alpha = opt.alpha.automatic ? collaboration_rate(masks) : opt.alpha.fixed;

  // Positive pairs: A_s teaches A_c.
  ad::Var w_pos = g.constant(masks.positive);
  ad::Var w_neg = g.constant(masks.negative);
  if (opt.soft_mask) {
    if (opt.teacher_gradient) {
      w_pos = ad::multiply(w_pos, a_s);
      w_neg = ad::multiply(w_neg, ad::subtract(g.constant(ones_like(ac)), a_c));
    } else {
      Tensor wp = masks.positive, wn = masks.negative;
      for (std::size_t i = 0; i < wp.size(); ++i) {
        wp[i] *= as[i];
        wn[i] *= 1.0 - ac[i];
      }
      w_pos = g.constant(std::move(wp));
      w_neg = g.constant(std::move(wn));
    }
  }
  t.l_pos = masked_neglog_mean(g, w_pos, a_c, masks.count_pos);
  t.clamped_pos = any_clamped(masks.positive, ac);

  // Negative pairs: A_c teaches A_s.
  ad::Var one_minus_as = ad::subtract(g.constant(ones_like(as)), a_s);
  t.l_neg = masked_neglog_mean(g, w_neg, one_minus_as, masks.count_neg);
  t.clamped_neg = any_clamped(masks.negative, one_minus_as.value());

  t.omega = ad::add(t.l_pos, ad::scale(t.l_neg, t.alpha));

  Tensor sep({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && as.at(i, j) < opt.l) {
        sep.at(i, j) = 1.0;
        ++t.count_sep;
      }
    }
  }
  ad::Var one_minus_ac = ad::subtract(g.constant(ones_like(ac)), a_c);
  t.clamped_sep = any_clamped(sep, one_minus_ac.value());
  t.l_sep = masked_neglog_mean(g, g.constant(std::move(sep)), one_minus_ac, t.count_sep);
  return t;
}

double l_pos(const Tensor& a_s, const Tensor& a_c, double u, bool soft_mask, bool* clamped) {
  expect_pair(a_s, a_c);
  ad::Graph g;
  CollaborativeOptions opt;
  opt.u = u;
  // l only matters for the negative side; any value below u works here.
  opt.l = u / 2.0;
  opt.soft_mask = soft_mask;
  auto t = collaborative_terms(g, g.constant(a_s), g.constant(a_c), opt);
  if (clamped) *clamped = t.clamped_pos;
  return t.l_pos.value().item();
}

double l_neg(const Tensor& a_c, const Tensor& a_s, double l, bool soft_mask, bool* clamped) {
  expect_pair(a_s, a_c);
  ad::Graph g;
  CollaborativeOptions opt;
  opt.l = l;
  opt.u = (1.0 + l) / 2.0;
  opt.soft_mask = soft_mask;
  auto t = collaborative_terms(g, g.constant(a_s), g.constant(a_c), opt);
  if (clamped) *clamped = t.clamped_neg;
  return t.l_neg.value().item();
}

SubspaceLossTerms subspace_loss(ad::Var z, ad::Var c, ad::Var zc, ad::Var x, ad::Var x_hat, double lambda1) {
  if (z.shape() != zc.shape()) {
    throw ValidationError("Z " + shape_string(z.shape()) + " and ZC " + shape_string(zc.shape()) + " differ");
  }
  if (x.shape() != x_hat.shape()) {
    throw ValidationError("X " + shape_string(x.shape()) + " and X_hat " + shape_string(x_hat.shape()) + " differ");
  }
  SubspaceLossTerms t;
  t.coef = ad::frobenius_norm_squared(c);
  t.self_expr = ad::scale(ad::frobenius_norm_squared(ad::subtract(z, zc)), lambda1 / 2.0);
  t.recon = ad::scale(ad::frobenius_norm_squared(ad::subtract(x, x_hat)), 0.5);
  t.total = ad::add(ad::add(t.coef, t.self_expr), t.recon);
  return t;
}

SubspaceLossValues subspace_loss(const Tensor& z, const Tensor& c, const Tensor& x, const Tensor& x_hat,
                                 double lambda1) {
  ad::Graph g;
  ad::Var zv = g.constant(z);
  ad::Var cv = g.constant(c);
  auto t = subspace_loss(zv, cv, nn::self_express(zv, cv), g.constant(x), g.constant(x_hat), lambda1);
  return {t.coef.value().item(), t.self_expr.value().item(), t.recon.value().item(), t.total.value().item()};
}

double total_loss(double l_sub, double omega, double lambda_cl) { return l_sub + lambda_cl * omega; }

}  // namespace ncsc
