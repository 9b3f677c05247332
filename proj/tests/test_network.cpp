#include <doctest.h>

#include <cmath>

#include "ncsc/errors.hpp"
#include "ncsc/network.hpp"
#include "support.hpp"

using namespace ncsc;
using testing::random_tensor;

namespace {

nn::LayerSpec dense(std::size_t units, nn::Activation act = nn::Activation::None) {
  nn::LayerSpec s;
  s.kind = nn::LayerKind::Dense;
  s.channels_or_units = units;
  s.activation = act;
  return s;
}

nn::LayerSpec conv(nn::LayerKind kind, std::size_t k, std::size_t ch, nn::Activation act = nn::Activation::Relu) {
  nn::LayerSpec s;
  s.kind = kind;
  s.kernel_size = k;
  s.stride = 2;
  s.channels_or_units = ch;
  s.activation = act;
  return s;
}

nn::NetworkConfig dense_config(std::size_t f, std::size_t latent, std::size_t k = 2) {
  nn::NetworkConfig c;
  c.input_shape = {f};
  c.num_clusters = k;
  c.intrinsic_dim_guess = 1;
  c.encoder = {dense(latent)};
  c.decoder = {dense(f)};
  c.classifier_head = {};
  return c;
}

nn::NetworkConfig mnist_config() {
  using nn::LayerKind;
  nn::NetworkConfig c;
  c.input_shape = {1, 28, 28};
  c.num_clusters = 10;
  c.intrinsic_dim_guess = 9;
  c.encoder = {conv(LayerKind::Conv, 5, 10), conv(LayerKind::Conv, 3, 20), conv(LayerKind::Conv, 3, 30, nn::Activation::None)};
  c.decoder = {conv(LayerKind::ConvTranspose, 3, 20), conv(LayerKind::ConvTranspose, 3, 10),
               conv(LayerKind::ConvTranspose, 5, 1, nn::Activation::None)};
  c.classifier_head = {dense(16, nn::Activation::Relu)};
  return c;
}

void set_all(nn::Network& net, const std::string& prefix, double v) {
  for (auto* p : net.parameters().with_prefix(prefix)) p->value().fill(v);
}

}  // namespace

TEST_CASE("zero encoder maps zero input to zero") {
  nn::Network net(dense_config(4, 3), 0);
  set_all(net, "encoder.", 0.0);
  ad::Graph g;
  ad::Var z = net.encode(g, g.constant(Tensor({2, 4})));
  CHECK(z.value() == Tensor({2, 3}));
}

TEST_CASE("identity dense layers pass data through") {
  nn::Network net(dense_config(3, 3), 0);
  net.parameters().at("encoder.0.weight").value() = Tensor::identity(3);
  net.parameters().at("encoder.0.bias").value().fill(0.0);
  net.parameters().at("decoder.0.weight").value() = Tensor::identity(3);
  net.parameters().at("decoder.0.bias").value().fill(0.0);
  Rng rng(1);
  const Tensor x = random_tensor({4, 3}, rng);
  ad::Graph g;
  ad::Var z = net.encode(g, g.constant(x));
  CHECK(z.value() == x);
  CHECK(net.decode(g, z).value() == x);
}

TEST_CASE("conv stack shape arithmetic on 28x28") {
  nn::Network net(mnist_config(), 0);
  CHECK(net.latent_dim() == 480);
  CHECK(net.latent_shape() == Shape{30, 4, 4});
  CHECK(net.input_features() == 784);
  Rng rng(2);
  const Tensor x = random_tensor({2, 784}, rng, 0.0, 1.0);
  ad::Graph g;
  ad::Var z = net.encode(g, g.constant(x));
  CHECK(z.shape() == Shape{2, 480});
  Tensor c({2, 2}, 0.0);
  c.at(0, 1) = 1.0;
  c.at(1, 0) = 1.0;
  ad::Var xh = net.decode(g, nn::self_express(z, g.constant(c)));
  CHECK(xh.shape() == Shape{2, 784});
}

TEST_CASE("configuration errors are rejected at build time") {
  auto small_latent = dense_config(6, 3, 3);
  small_latent.intrinsic_dim_guess = 1;
  CHECK_NOTHROW(nn::Network(small_latent, 0));
  small_latent.intrinsic_dim_guess = 2;
  CHECK_THROWS_AS(nn::Network(small_latent, 0), ValidationError);

  auto mismatch = dense_config(6, 3);
  mismatch.decoder = {dense(5)};
  CHECK_THROWS_AS(nn::Network(mismatch, 0), ValidationError);

  auto one_class = dense_config(6, 3);
  one_class.num_clusters = 1;
  CHECK_THROWS_AS(nn::Network(one_class, 0), ValidationError);

  auto bad_decoder = mnist_config();
  bad_decoder.decoder.pop_back();
  CHECK_THROWS_AS(nn::Network(bad_decoder, 0), ValidationError);
}

TEST_CASE("self-expression under the row convention") {
  ad::Graph g;
  const Tensor z = Tensor::matrix(2, 2, {1, 0, 2, 0});
  CHECK(nn::self_express(g.constant(z), g.constant(Tensor({2, 2}))).value() == Tensor({2, 2}));
  CHECK(nn::self_express(g.constant(z), g.constant(Tensor::matrix(2, 2, {0, 2, 0.5, 0}))).value() == z);
  const Tensor dup = Tensor::matrix(2, 3, {1, 2, 3, 1, 2, 3});
  CHECK(nn::self_express(g.constant(dup), g.constant(Tensor::matrix(2, 2, {0, 1, 1, 0}))).value() == dup);
  CHECK_THROWS_AS(nn::self_express(g.constant(z), g.constant(Tensor::matrix(2, 2, {0.1, 0, 0, 0}))), ValidationError);
  CHECK_THROWS_AS(nn::self_express(g.constant(z), g.constant(Tensor({3, 3}))), ValidationError);
}

TEST_CASE("classifier outputs") {
  auto cfg = dense_config(4, 10, 10);
  nn::Network net(cfg, 0);
  set_all(net, "classifier.", 0.0);
  ad::Graph g;
  ad::Var nu = net.classify(g, g.constant(Tensor({3, 10}, 0.5)));
  for (double v : nu.value().values()) CHECK(v == doctest::Approx(1.0 / std::sqrt(10.0)).epsilon(1e-14));

  // Saturating logits give an almost one-hot row.
  auto& w = net.parameters().at("classifier.out.weight").value();
  w.fill(0.0);
  auto& b = net.parameters().at("classifier.out.bias").value();
  b.fill(0.0);
  b[0] = 1000.0;
  ad::Graph g2;
  ad::Var nu2 = net.classify(g2, g2.constant(Tensor({1, 10})));
  CHECK(nu2.value()[0] == doctest::Approx(1.0));
  CHECK(nu2.value()[1] < 1e-300);

  Rng rng(3);
  nn::Network rnd(cfg, 9);
  ad::Graph g3;
  const Tensor& out = rnd.classify(g3, g3.constant(random_tensor({20, 10}, rng, -5, 5))).value();
  for (std::size_t i = 0; i < 20; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      CHECK(out.at(i, j) > 0.0);
      CHECK(out.at(i, j) <= 1.0);
      sq += out.at(i, j) * out.at(i, j);
    }
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-12);
  }
}

TEST_CASE("shape closure over random dense configs") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t f = 3 + rng.below(6), k = 2 + rng.below(3), guess = 1 + rng.below(2);
    nn::NetworkConfig c;
    c.input_shape = {f};
    c.num_clusters = k;
    c.intrinsic_dim_guess = guess;
    const std::size_t latent = guess * k + rng.below(4);
    c.encoder = {dense(5 + rng.below(5), nn::Activation::Relu), dense(latent)};
    c.decoder = {dense(4 + rng.below(5), nn::Activation::Relu), dense(f)};
    nn::Network net(c, trial);
    const std::size_t n = 2 + rng.below(5);
    const Tensor x = random_tensor({n, f}, rng);
    ad::Graph g;
    ad::Var z = net.encode(g, g.constant(x));
    Tensor cm = random_tensor({n, n}, rng);
    nn::project_zero_diagonal(cm);
    CHECK(net.decode(g, nn::self_express(z, g.constant(cm))).shape() == x.shape());
    CHECK(net.classify(g, z).shape() == Shape{n, k});
  }
}

TEST_CASE("plain autoencoder path equals the identity-bypass path") {
  // Feeding Z straight to the decoder is what pretraining does; with C
  // replaced by a pure permutation of duplicates the decoder sees the same rows.
  nn::Network net(dense_config(5, 4), 2);
  Rng rng(5);
  const Tensor x1 = random_tensor({1, 5}, rng);
  Tensor x({2, 5});
  for (std::size_t j = 0; j < 5; ++j) x.at(0, j) = x.at(1, j) = x1[j];
  ad::Graph g;
  ad::Var z = net.encode(g, g.constant(x));
  const Tensor direct = net.decode(g, z).value();
  const Tensor via_c = net.decode(g, nn::self_express(z, g.constant(Tensor::matrix(2, 2, {0, 1, 1, 0})))).value();
  CHECK(direct == via_c);
}

TEST_CASE("seeded initialization is deterministic and bounded") {
  nn::Network a(mnist_config(), 5), b(mnist_config(), 5), c(mnist_config(), 6);
  bool differs = false;
  for (auto* p : a.parameters().all()) {
    CHECK(p->value() == b.parameters().at(p->name()).value());
    differs |= !(p->value() == c.parameters().at(p->name()).value());
  }
  CHECK(differs);
  const auto& w = a.parameters().at("encoder.0.weight").value();
  for (double v : w.values()) CHECK(std::abs(v) <= 1.0 / std::sqrt(25.0));
}
