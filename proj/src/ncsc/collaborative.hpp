#pragma once

#include <optional>
#include <string>

#include "ncsc/autodiff.hpp"

namespace ncsc {

// Floor applied inside every log of the collaborative losses.
inline constexpr double kLogClamp = 1e-12;

struct ConfidenceMasks {
  Tensor positive;  // M_s: 1 where A_s > u, off-diagonal
  Tensor negative;  // M_c: 1 where A_c < l, off-diagonal
  double u = 0.0;
  double l = 0.0;
  std::size_t count_pos = 0;
  std::size_t count_neg = 0;
};

ConfidenceMasks build_masks(const Tensor& a_s, const Tensor& a_c, double u, double l);

// max(count_pos, 1) / max(count_neg, 1).
double collaboration_rate(const ConfidenceMasks& masks);

struct AlphaMode {
  bool automatic = true;
  double fixed = 1.0;

  static AlphaMode parse(const std::string& text);  // "auto-ratio" or "fixed:<x>"
  std::string to_string() const;
};

struct CollaborativeOptions {
  double u = 0.7;
  double l = 0.1;
  bool soft_mask = true;
  // Let gradients flow through the soft-mask weights A_s (for l_pos) and 1 - A_c (for l_neg).
  bool teacher_gradient = false;
  AlphaMode alpha;
};

struct CollaborativeTerms {
  ad::Var l_pos;
  ad::Var l_neg;
  // Classifier separation: mean of -log(1 - A_c) over pairs with A_s < l.
  ad::Var l_sep;
  ad::Var omega;  // l_pos + alpha * l_neg
  double alpha = 1.0;
  std::size_t count_pos = 0;
  std::size_t count_neg = 0;
  std::size_t count_sep = 0;
  bool clamped_pos = false;
  bool clamped_neg = false;
  bool clamped_sep = false;
};

CollaborativeTerms collaborative_terms(ad::Graph& g, ad::Var a_s, ad::Var a_c, const CollaborativeOptions& opt);

// Value-only versions.
double l_pos(const Tensor& a_s, const Tensor& a_c, double u, bool soft_mask, bool* clamped = nullptr);
double l_neg(const Tensor& a_c, const Tensor& a_s, double l, bool soft_mask, bool* clamped = nullptr);

struct SubspaceLossTerms {
  ad::Var coef;       // ||C||_F^2
  ad::Var self_expr;  // lambda1 / 2 ||Z - ZC||_F^2
  ad::Var recon;      // 1/2 ||X - X_hat||_F^2
  ad::Var total;
};

SubspaceLossTerms subspace_loss(ad::Var z, ad::Var c, ad::Var zc, ad::Var x, ad::Var x_hat, double lambda1);

struct SubspaceLossValues {
  double coef = 0.0, self_expr = 0.0, recon = 0.0, total = 0.0;
};
// Value-only version; computes ZC from Z and C with the row convention.
SubspaceLossValues subspace_loss(const Tensor& z, const Tensor& c, const Tensor& x, const Tensor& x_hat,
                                 double lambda1);

double total_loss(double l_sub, double omega, double lambda_cl);

// Everything logged for one training step.
struct LossBreakdown {
  double l_sub_coef = 0.0;
  double l_sub_self_expr = 0.0;
  double l_sub_recon = 0.0;
  double l_sub = 0.0;
  double l_pos = 0.0;
  double l_neg = 0.0;
  double alpha = 0.0;
  double omega = 0.0;
  double lambda_cl = 0.0;
  double total = 0.0;
  double l_sep = 0.0;
  // total + lambda_cl * separation_weight * l_sep; the quantity actually minimized.
  double objective = 0.0;
  std::size_t count_pos = 0;
  std::size_t count_neg = 0;
  bool clamped = false;
};

}  // namespace ncsc
