#include "ncsc/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "ncsc/affinity.hpp"
#include "ncsc/rng.hpp"

namespace ncsc {

namespace {

ExperimentConfig prepared(ExperimentConfig cfg, const Shape& sample_shape) {
  if (cfg.network.input_shape.empty()) cfg.network.input_shape = sample_shape;
  if (numel(cfg.network.input_shape) != numel(sample_shape)) {
    throw ValidationError("config key 'network.input_shape' " + shape_string(cfg.network.input_shape) +
                          " does not match data samples " + shape_string(sample_shape));
  }
  cfg.validate();
  return cfg;
}

ad::AdamOptions adam_lr(double lr) {
  ad::AdamOptions o;
  o.lr = lr;
  return o;
}

constexpr const char* kCoefPrefix = "self_expressive.batch";
constexpr const char* kEpochKey = "trainer.epochs_done";
constexpr const char* kStepKey = "trainer.steps_done";

// The partition shuffle draws from its own stream so it never shifts with
// changes to weight initialization.
constexpr std::uint64_t kPartitionStream = 0x9e3779b97f4a7c15ULL;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string coefficient_name(std::size_t batch) { return kCoefPrefix + std::to_string(batch) + ".C"; }

std::string training_log_header() {
  return "epoch,batch,step,u,l_sub_coef,l_sub_self_expr,l_sub_recon,l_sub,l_pos,l_neg,alpha,omega,lambda_cl,total,"
         "count_pos,count_neg,l_sep,objective,clamped";
}

std::string training_log_row(const StepRecord& r) {
  const LossBreakdown& b = r.loss;
  std::string s = std::to_string(r.epoch) + "," + std::to_string(r.batch) + "," + std::to_string(r.step) + ",";
  for (double v : {r.u, b.l_sub_coef, b.l_sub_self_expr, b.l_sub_recon, b.l_sub, b.l_pos, b.l_neg, b.alpha, b.omega,
                   b.lambda_cl, b.total}) {
    s += fmt(v) + ",";
  }
  s += std::to_string(b.count_pos) + "," + std::to_string(b.count_neg) + "," + fmt(b.l_sep) + "," + fmt(b.objective) +
       "," + (b.clamped ? "1" : "0");
  return s;
}

Trainer::Trainer(ExperimentConfig config, const Shape& sample_shape)
    : config_(prepared(std::move(config), sample_shape)),
      net_(config_.network, config_.seed),
      opt_ae_(adam_lr(config_.lr_ae)),
      opt_cls_(adam_lr(config_.lr_other)) {}

void Trainer::set_partition(std::size_t n) {
  if (n < 2) throw ValidationError("training needs at least 2 points, got " + std::to_string(n));
  if (n == partition_n_) return;
  Rng rng(config_.seed ^ kPartitionStream);
  const auto perm = rng.permutation(n);
  batches_.clear();
  for (std::size_t start = 0; start < n; start += config_.batch_size) {
    const std::size_t end = std::min(n, start + config_.batch_size);
    batches_.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                          perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A trailing singleton batch cannot self-express; fold it into its neighbour.
  if (batches_.size() > 1 && batches_.back().size() < 2) {
    auto last = batches_.back();
    batches_.pop_back();
    batches_.back().insert(batches_.back().end(), last.begin(), last.end());
  }
  partition_n_ = n;
}

PretrainReport Trainer::pretrain(const Tensor& x) {
  set_partition(x.dim(0));
  PretrainReport rep;
  rep.initial_mse = reconstruction_mse(x);
  ad::Adam opt(adam_lr(config_.lr_pretrain));
  auto params = net_.autoencoder_parameters();
  for (std::size_t e = 0; e < config_.pretrain_epochs; ++e) {
    const NamedTensors safe = snapshot(net_.parameters());
    double total = 0.0;
    for (const auto& rows : batches_) {
      ad::Graph g;
      ad::Var xb = g.constant(gather_rows(x, rows));
      ad::Var xh = net_.decode(g, net_.encode(g, xb));
      ad::Var loss = ad::scale(ad::frobenius_norm_squared(ad::subtract(xb, xh)), 0.5);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        restore(net_.parameters(), safe);
        throw DivergenceError("pretraining loss became non-finite in epoch " + std::to_string(e + 1) +
                              "; parameters rolled back to the last finite state");
      }
      total += lv;
      net_.parameters().zero_grad();
      g.backward(loss);
      opt.step(params);
    }
    rep.epoch_loss.push_back(total / static_cast<double>(batches_.size()));
  }
  rep.final_mse = reconstruction_mse(x);
  return rep;
}

double Trainer::reconstruction_mse(const Tensor& x) {
  double total = 0.0;
  const std::size_t n = x.dim(0);
  for (std::size_t start = 0; start < n; start += config_.batch_size) {
    const std::size_t end = std::min(n, start + config_.batch_size);
    ad::Graph g;
    ad::Var xb = g.constant(slice_rows(x, start, end));
    ad::Var xh = net_.decode(g, net_.encode(g, xb));
    total += ad::frobenius_norm_squared(ad::subtract(xb, xh)).value().item();
  }
  return total / static_cast<double>(n);
}

Tensor& Trainer::coefficients(std::size_t index) {
  const std::string name = coefficient_name(index);
  if (ad::Parameter* p = coeffs_.find(name)) return p->value();
  if (index >= batches_.size()) {
    throw ValidationError("batch " + std::to_string(index) + " is outside the partition of " +
                          std::to_string(batches_.size()) + " batches");
  }
  const std::size_t n = batches_[index].size();
  return coeffs_.add(name, Tensor({n, n})).value();
}

ad::Adam& Trainer::c_optimizer(std::size_t index) {
  auto it = opt_c_.find(index);
  if (it == opt_c_.end()) it = opt_c_.emplace(index, ad::Adam(adam_lr(config_.lr_other))).first;
  return it->second;
}

double Trainer::current_u() const {
  return epoch_ == 0 ? config_.u_schedule.initial : config_.u_schedule.after_first_epoch;
}

StepRecord Trainer::train_batch(std::size_t index, const Tensor& xb) {
  if (index >= batches_.size()) {
    throw ValidationError("batch " + std::to_string(index) + " is outside the partition of " +
                          std::to_string(batches_.size()) + " batches");
  }
  if (xb.rank() != 2 || xb.dim(0) != batches_[index].size()) {
    throw ValidationError("batch " + std::to_string(index) + " expects " + std::to_string(batches_[index].size()) +
                          " rows, got " + shape_string(xb.shape()));
  }
  coefficients(index);
  ad::Parameter& c = coeffs_.at(coefficient_name(index));
  ad::Adam& opt_c = c_optimizer(index);
  ad::Parameter* c_ptr = &c;
  const auto ae = net_.autoencoder_parameters();
  const auto cls = net_.classifier_parameters();
  const double u = current_u();
  const CollaborativeOptions copt = config_.collaborative_options(u);
  const double lam = config_.lambda_cl;
  const double beta = config_.separation_weight;

  auto zero_all = [&] {
    net_.parameters().zero_grad();
    c.zero_grad();
  };

  // Stage 1: autoencoder + self-expressive layer on the subspace loss.
  for (std::size_t s = 0; s < config_.inner_se_steps; ++s) {
    ad::Graph g;
    ad::Var x = g.constant(xb);
    ad::Var z = net_.encode(g, x);
    ad::Var cv = g.parameter(c);
    ad::Var zc = nn::self_express(z, cv);
    auto sub = subspace_loss(z, cv, zc, x, net_.decode(g, zc), config_.lambda1);
    if (!std::isfinite(sub.total.value().item())) {
      throw DivergenceError("subspace loss became non-finite on batch " + std::to_string(index));
    }
    zero_all();
    g.backward(sub.total);
    opt_ae_.step(ae);
    opt_c.step(std::span<ad::Parameter* const>(&c_ptr, 1));
    nn::project_zero_diagonal(c.value());
  }

  // Stage 2: classifier only, with A_s and Z held fixed.
  if (config_.classifier_steps > 0) {
    Tensor z_fixed;
    {
      ad::Graph g;
      z_fixed = net_.encode(g, g.constant(xb)).value();
    }
    const Tensor a_s_fixed = subspace_affinity(c.value());
    for (std::size_t s = 0; s < config_.classifier_steps; ++s) {
      ad::Graph g;
      ad::Var nu = net_.classify(g, g.constant(z_fixed));
      ad::Var a_c = class_affinity(nu);
      auto t = collaborative_terms(g, g.constant(a_s_fixed), a_c, copt);
      ad::Var obj = ad::scale(ad::add(t.omega, ad::scale(t.l_sep, beta)), lam);
      if (!std::isfinite(obj.value().item())) {
        throw DivergenceError("collaborative loss became non-finite on batch " + std::to_string(index));
      }
      zero_all();
      g.backward(obj);
      opt_cls_.step(cls);
    }
  }

  // Stage 3: one joint step on the full objective.
  ad::Graph g;
  ad::Var x = g.constant(xb);
  ad::Var z = net_.encode(g, x);
  ad::Var cv = g.parameter(c);
  ad::Var zc = nn::self_express(z, cv);
  auto sub = subspace_loss(z, cv, zc, x, net_.decode(g, zc), config_.lambda1);
  ad::Var a_s = subspace_affinity(g, cv);
  ad::Var a_c = class_affinity(net_.classify(g, z));
  auto t = collaborative_terms(g, a_s, a_c, copt);
  ad::Var total = ad::add(sub.total, ad::scale(t.omega, lam));
  ad::Var objective = ad::add(total, ad::scale(t.l_sep, lam * beta));

  StepRecord rec;
  rec.epoch = epoch_ + 1;
  rec.batch = index;
  rec.step = ++step_;
  rec.u = u;
  LossBreakdown& b = rec.loss;
  b.l_sub_coef = sub.coef.value().item();
  b.l_sub_self_expr = sub.self_expr.value().item();
  b.l_sub_recon = sub.recon.value().item();
  b.l_sub = sub.total.value().item();
  b.l_pos = t.l_pos.value().item();
  b.l_neg = t.l_neg.value().item();
  b.alpha = t.alpha;
  b.omega = t.omega.value().item();
  b.lambda_cl = lam;
  b.total = total.value().item();
  b.l_sep = t.l_sep.value().item();
  b.objective = objective.value().item();
  b.count_pos = t.count_pos;
  b.count_neg = t.count_neg;
  b.clamped = t.clamped_pos || t.clamped_neg || t.clamped_sep;
  if (!std::isfinite(b.objective)) {
    throw DivergenceError("training objective became non-finite on batch " + std::to_string(index));
  }

  zero_all();
  g.backward(objective);
  opt_ae_.step(ae);
  opt_cls_.step(cls);
  opt_c.step(std::span<ad::Parameter* const>(&c_ptr, 1));
  nn::project_zero_diagonal(c.value());
  return rec;
}

std::vector<EpochRecord> Trainer::fit(const Dataset& data, const StepSink& on_step, const EpochSink& on_epoch) {
  const Tensor& x = data.features();
  if (x.dim(1) != net_.input_features()) {
    throw ValidationError("dataset has " + std::to_string(x.dim(1)) + " features, network expects " +
                          std::to_string(net_.input_features()));
  }
  set_partition(x.dim(0));
  std::vector<EpochRecord> history;
  auto evaluate_now = [&] {
    EpochRecord r;
    r.epoch = epoch_;
    if (data.has_labels()) {
      const Labels pred = predict(x);
      r.metrics = evaluate(data.labels_for_evaluation(), pred, net_.num_clusters());
    }
    history.push_back(r);
    if (on_epoch) on_epoch(r);
  };
  evaluate_now();
  while (epoch_ < config_.epochs) {
    if (config_.reinit_c && epoch_ > 0) {
      for (auto* p : coeffs_.all()) p->value().fill(0.0);
      opt_c_.clear();
    }
    NamedTensors safe = state();
    try {
      for (std::size_t b = 0; b < batches_.size(); ++b) {
        const StepRecord rec = train_batch(b, gather_rows(x, batches_[b]));
        if (on_step) on_step(rec);
      }
    } catch (const DivergenceError& e) {
      load_state(safe);
      throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch_ + 1) +
                            "); parameters rolled back to the start of the epoch");
    }
    ++epoch_;
    evaluate_now();
  }
  return history;
}

Tensor Trainer::predict_proba(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != net_.input_features()) {
    throw ValidationError("predict expects [n, " + std::to_string(net_.input_features()) + "], got " +
                          shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), k = net_.num_clusters();
  Tensor out({n, k});
  const std::size_t chunk = std::max<std::size_t>(config_.batch_size, 1);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    ad::Graph g;
    const Tensor& nu = net_.classify(g, net_.encode(g, g.constant(slice_rows(x, start, end)))).value();
    std::copy(nu.values().begin(), nu.values().end(), out.data() + start * k);
  }
  return out;
}

Labels Trainer::predict(const Tensor& x) { return infer_labels(predict_proba(x)); }

Trainer::BatchAffinities Trainer::batch_affinities(std::size_t index, const Tensor& x) {
  set_partition(x.dim(0));
  if (index >= batches_.size()) {
    throw ValidationError("batch " + std::to_string(index) + " is outside the partition of " +
                          std::to_string(batches_.size()) + " batches");
  }
  BatchAffinities out;
  out.rows = batches_[index];
  out.a_s = subspace_affinity(coefficients(index));
  out.a_c = class_affinity(predict_proba(gather_rows(x, out.rows)));
  return out;
}

NamedTensors Trainer::state() const {
  NamedTensors out = snapshot(net_.parameters());
  for (const auto* p : coeffs_.all()) out.emplace_back(p->name(), p->value());
  out.emplace_back(kEpochKey, Tensor::scalar(static_cast<double>(epoch_)));
  out.emplace_back(kStepKey, Tensor::scalar(static_cast<double>(step_)));
  return out;
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, state()); }

void Trainer::load(const std::filesystem::path& path) { load_state(load_checkpoint(path)); }

void Trainer::load_state(const NamedTensors& tensors) {
  std::size_t matched = restore(net_.parameters(), tensors);
  for (const auto& [name, t] : tensors) {
    if (name.rfind(kCoefPrefix, 0) == 0) {
      if (t.rank() != 2 || t.dim(0) != t.dim(1)) {
        throw ValidationError("checkpoint tensor '" + name + "' is not a square matrix");
      }
      if (ad::Parameter* p = coeffs_.find(name)) {
        p->value() = t;
      } else {
        coeffs_.add(name, t);
      }
      ++matched;
    } else if (name == kEpochKey) {
      epoch_ = static_cast<std::size_t>(t.item());
    } else if (name == kStepKey) {
      step_ = static_cast<std::size_t>(t.item());
    }
  }
  if (matched == 0) throw ValidationError("checkpoint holds no tensors matching this model");
}

}  // namespace ncsc
