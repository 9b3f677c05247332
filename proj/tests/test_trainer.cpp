#include <doctest.h>

#include <cmath>

#include "ncsc/affinity.hpp"
#include "ncsc/collaborative.hpp"
#include "ncsc/data.hpp"
#include "ncsc/errors.hpp"
#include "ncsc/network.hpp"
#include "ncsc/optim.hpp"
#include "ncsc/trainer.hpp"
#include "support.hpp"

using namespace ncsc;

namespace {

nn::LayerSpec dense(std::size_t units, nn::Activation act) {
  nn::LayerSpec s;
  s.kind = nn::LayerKind::Dense;
  s.channels_or_units = units;
  s.activation = act;
  return s;
}

ExperimentConfig small_config(std::size_t features = 12) {
  ExperimentConfig c;
  c.network.num_clusters = 3;
  c.network.intrinsic_dim_guess = 2;
  c.network.encoder = {dense(16, nn::Activation::Relu), dense(6, nn::Activation::None)};
  c.network.decoder = {dense(16, nn::Activation::Relu), dense(features, nn::Activation::None)};
  c.network.classifier_head = {dense(8, nn::Activation::Relu)};
  c.batch_size = 20;
  c.epochs = 2;
  c.pretrain_epochs = 5;
  c.inner_se_steps = 3;
  c.classifier_steps = 2;
  return c;
}

Dataset small_data(std::uint64_t seed = 0, Nonlinearity w = Nonlinearity::TanhWarp) {
  SyntheticSpec s;
  s.k = 3;
  s.d = 2;
  s.D = 12;
  s.n_per = 20;
  s.nonlinearity = w;
  s.seed = seed;
  return generate_synthetic(s);
}

std::vector<std::string> fit_log(const ExperimentConfig& cfg, const Dataset& data) {
  Trainer t(cfg, data.sample_shape());
  t.pretrain(data.features());
  std::vector<std::string> rows;
  t.fit(data, [&](const StepRecord& r) { rows.push_back(training_log_row(r)); });
  return rows;
}

}  // namespace

TEST_CASE("partition is fixed, complete and absorbs singletons") {
  ExperimentConfig cfg = small_config();
  cfg.batch_size = 20;
  Trainer t(cfg, {12});
  t.set_partition(61);
  const auto batches = t.batches();
  REQUIRE(batches.size() == 3);
  CHECK(batches.back().size() == 21);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  t.set_partition(61);
  CHECK(t.batches() == batches);
  CHECK_THROWS_AS(t.set_partition(1), ValidationError);
}

TEST_CASE("pretraining reduces reconstruction error") {
  for (std::uint64_t seed : {0, 1, 2}) {
    const Dataset data = small_data(seed, Nonlinearity::None);
    ExperimentConfig cfg = small_config();
    cfg.seed = seed;
    cfg.pretrain_epochs = 60;
    Trainer t(cfg, data.sample_shape());
    const auto rep = t.pretrain(data.features());
    CHECK(rep.epoch_loss.size() == 60);
    CHECK(rep.final_mse < rep.initial_mse);
  }
}

TEST_CASE("identity-sized autoencoder fits tiny data") {
  Rng rng(3);
  const Tensor x = testing::random_tensor({6, 4}, rng);
  ExperimentConfig cfg;
  cfg.network.num_clusters = 2;
  cfg.network.intrinsic_dim_guess = 2;
  cfg.network.encoder = {dense(4, nn::Activation::None)};
  cfg.network.decoder = {dense(4, nn::Activation::None)};
  cfg.batch_size = 6;
  cfg.pretrain_epochs = 3000;
  cfg.lr_pretrain = 1e-2;
  Trainer t(cfg, {4});
  const auto rep = t.pretrain(x);
  CHECK(rep.final_mse < 1e-6);
}

TEST_CASE("train_batch keeps the diagonal of C at zero and reports finite losses") {
  const Dataset data = small_data();
  Trainer t(small_config(), data.sample_shape());
  t.pretrain(data.features());
  t.set_partition(data.size());
  for (std::size_t b = 0; b < t.batches().size(); ++b) {
    const auto rec = t.train_batch(b, gather_rows(data.features(), t.batches()[b]));
    CHECK(std::isfinite(rec.loss.objective));
    CHECK(rec.loss.total == doctest::Approx(rec.loss.l_sub + rec.loss.lambda_cl * rec.loss.omega));
    CHECK(rec.loss.omega == doctest::Approx(rec.loss.l_pos + rec.loss.alpha * rec.loss.l_neg));
    const Tensor& c = t.coefficients(b);
    for (std::size_t i = 0; i < c.dim(0); ++i) CHECK(c.at(i, i) == 0.0);
  }
  CHECK_THROWS_AS(t.train_batch(0, Tensor({3, 12})), ValidationError);
  CHECK_THROWS_AS(t.train_batch(99, Tensor({3, 12})), ValidationError);
}

TEST_CASE("lambda_cl = 0 reduces to autoencoder plus self-expressive training") {
  const Dataset data = small_data(4);
  ExperimentConfig cfg = small_config();
  cfg.lambda_cl = 0.0;
  Trainer t(cfg, data.sample_shape());
  t.pretrain(data.features());
  t.set_partition(data.size());

  // Reference: a second network with the pretrained weights, driven by a plain
  // loop on the subspace loss alone.
  nn::Network ref(t.network().config(), cfg.seed);
  for (auto* p : ref.parameters().all()) p->value() = t.network().parameters().at(p->name()).value();
  const auto classifier_before = snapshot(t.network().parameters());
  ad::AdamOptions ae_opt;
  ae_opt.lr = cfg.lr_ae;
  ad::AdamOptions c_opt;
  c_opt.lr = cfg.lr_other;
  ad::Adam opt_ae(ae_opt);
  std::vector<ad::Adam> opt_c(t.batches().size(), ad::Adam(c_opt));
  ad::ParameterStore coeffs;
  for (std::size_t b = 0; b < t.batches().size(); ++b) {
    const std::size_t n = t.batches()[b].size();
    coeffs.add("C" + std::to_string(b), Tensor({n, n}));
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t b = 0; b < t.batches().size(); ++b) {
      const Tensor xb = gather_rows(data.features(), t.batches()[b]);
      ad::Parameter& c = coeffs.at("C" + std::to_string(b));
      ad::Parameter* cp = &c;
      double last = 0.0;
      for (std::size_t s = 0; s <= cfg.inner_se_steps; ++s) {
        ad::Graph g;
        ad::Var x = g.constant(xb);
        ad::Var z = ref.encode(g, x);
        ad::Var cv = g.parameter(c);
        ad::Var zc = nn::self_express(z, cv);
        auto sub = subspace_loss(z, cv, zc, x, ref.decode(g, zc), cfg.lambda1);
        last = sub.total.value().item();
        ref.parameters().zero_grad();
        c.zero_grad();
        g.backward(sub.total);
        opt_ae.step(ref.autoencoder_parameters());
        opt_c[b].step(std::span<ad::Parameter* const>(&cp, 1));
        nn::project_zero_diagonal(c.value());
      }
      const auto rec = t.train_batch(b, xb);
      CHECK(rec.loss.l_sub == last);
      CHECK(rec.loss.total == last);
    }
  }
  for (const auto& [name, v] : classifier_before) {
    if (name.rfind("classifier.", 0) == 0) CHECK(t.network().parameters().at(name).value() == v);
  }
}

TEST_CASE("fit with zero epochs evaluates once") {
  const Dataset data = small_data();
  ExperimentConfig cfg = small_config();
  cfg.epochs = 0;
  Trainer t(cfg, data.sample_shape());
  std::size_t steps = 0;
  const auto hist = t.fit(data, [&](const StepRecord&) { ++steps; });
  CHECK(hist.size() == 1);
  CHECK(steps == 0);
  CHECK(hist[0].metrics.has_value());
}

TEST_CASE("fit is deterministic and uses the u schedule") {
  const Dataset data = small_data(5);
  const auto a = fit_log(small_config(), data), b = fit_log(small_config(), data);
  CHECK(a == b);
  REQUIRE(a.size() == 2 * 3);
  CHECK(a[0].rfind("1,0,1,0.69999999999999996,", 0) == 0);
  CHECK(a[3].rfind("2,0,4,0.90000000000000002,", 0) == 0);
}

TEST_CASE("total loss trends down over consecutive batches") {
  SyntheticSpec s;
  s.n_per = 100;
  s.nonlinearity = Nonlinearity::TanhWarp;
  const Dataset data = generate_synthetic(s);
  ExperimentConfig cfg = small_config(30);
  cfg.network.intrinsic_dim_guess = 2;
  cfg.batch_size = 60;
  cfg.pretrain_epochs = 30;
  cfg.epochs = 10;
  Trainer t(cfg, data.sample_shape());
  t.pretrain(data.features());
  std::vector<double> totals;
  t.fit(data, [&](const StepRecord& r) { totals.push_back(r.loss.total); });
  REQUIRE(totals.size() == 50);
  // Least-squares slope of total against step index.
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    mx += static_cast<double>(i);
    my += totals[i];
  }
  mx /= 50.0;
  my /= 50.0;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    sxy += (static_cast<double>(i) - mx) * (totals[i] - my);
    sxx += (static_cast<double>(i) - mx) * (static_cast<double>(i) - mx);
  }
  CHECK(sxy / sxx < 0.0);
}

TEST_CASE("prediction ignores C and the decoder") {
  const Dataset data = small_data(6);
  Trainer t(small_config(), data.sample_shape());
  t.pretrain(data.features());
  const auto hist = t.fit(data);
  const Labels before = t.predict(data.features());
  CHECK(before.size() == data.size());
  for (auto l : before) CHECK(l < 3);
  // The last evaluation used the same path.
  CHECK(hist.back().metrics->acc == accuracy(data.labels_for_evaluation(), before));

  for (auto* p : t.network().decoder_parameters()) p->value().fill(std::nan(""));
  for (std::size_t b = 0; b < t.batches().size(); ++b) t.coefficients(b).fill(std::nan(""));
  CHECK(t.predict(data.features()) == before);
  CHECK(t.predict_proba(data.features()).all_finite());
}

TEST_CASE("duplicate rows get identical labels") {
  const Dataset data = small_data(7);
  Trainer t(small_config(), data.sample_shape());
  Tensor x({4, 12});
  for (std::size_t j = 0; j < 12; ++j) {
    x.at(0, j) = x.at(2, j) = data.features().at(0, j);
    x.at(1, j) = x.at(3, j) = data.features().at(30, j);
  }
  const Labels l = t.predict(x);
  CHECK(l[0] == l[2]);
  CHECK(l[1] == l[3]);
}

TEST_CASE("checkpoints restore parameters, coefficients and counters") {
  testing::TempDir dir("trainer");
  const Dataset data = small_data(8);
  Trainer t(small_config(), data.sample_shape());
  t.pretrain(data.features());
  t.fit(data);
  t.save(dir / "m.ckpt");

  Trainer u(small_config(), data.sample_shape());
  u.load(dir / "m.ckpt");
  CHECK(u.epochs_done() == t.epochs_done());
  CHECK(u.steps_done() == t.steps_done());
  CHECK(u.predict_proba(data.features()) == t.predict_proba(data.features()));
  u.set_partition(data.size());
  CHECK(u.coefficients(0) == t.coefficients(0));

  ExperimentConfig other = small_config();
  other.network.encoder[1].channels_or_units = 7;
  Trainer w(other, data.sample_shape());
  CHECK_THROWS_AS(w.load(dir / "m.ckpt"), ValidationError);
}

TEST_CASE("config and data must agree") {
  ExperimentConfig cfg = small_config();
  cfg.network.input_shape = {13};
  CHECK_THROWS_AS(Trainer(cfg, {12}), ValidationError);
}
