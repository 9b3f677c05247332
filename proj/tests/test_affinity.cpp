#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ncsc/affinity.hpp"
#include "ncsc/data.hpp"
#include "ncsc/errors.hpp"
#include "ncsc/metrics.hpp"
#include "ncsc/network.hpp"
#include "support.hpp"

using namespace ncsc;
using testing::random_tensor;

namespace {

Tensor normalized_rows(Tensor t) {
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.dim(1); ++j) s += t.at(i, j) * t.at(i, j);
    for (std::size_t j = 0; j < t.dim(1); ++j) t.at(i, j) /= std::sqrt(s);
  }
  return t;
}

Tensor random_coefficients(Rng& rng, std::size_t n) {
  Tensor c = random_tensor({n, n}, rng);
  nn::project_zero_diagonal(c);
  return c;
}

}  // namespace

TEST_CASE("class affinity examples") {
  const Tensor onehots = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(class_affinity(onehots) == Tensor::identity(3));
  const double r = 1.0 / std::sqrt(3.0);
  CHECK(class_affinity(Tensor::matrix(2, 3, {r, r, r, r, r, r})).at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  const double h = 1.0 / std::sqrt(2.0);
  CHECK(class_affinity(Tensor::matrix(2, 2, {1, 0, h, h})).at(0, 1) == doctest::Approx(0.70710678118654752));
  CHECK_THROWS_AS(class_affinity(Tensor::matrix(2, 2, {1, 0, 0.5, 0.5})), ValidationError);
}

TEST_CASE("class affinity is a PSD Gram matrix with unit diagonal") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor nu = normalized_rows(random_tensor({6, 4}, rng, 0.01, 1.0));
    const Tensor a = class_affinity(nu);
    Eigen::MatrixXd m(6, 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(a.at(i, i) == doctest::Approx(1.0).epsilon(1e-15));
      for (std::size_t j = 0; j < 6; ++j) {
        m(i, j) = a.at(i, j);
        CHECK(a.at(i, j) == a.at(j, i));
        CHECK(a.at(i, j) >= 0.0);
        CHECK(a.at(i, j) <= 1.0);
      }
    }
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("subspace affinity examples") {
  CHECK(subspace_affinity(Tensor({3, 3})) == Tensor::identity(3));
  CHECK(subspace_affinity(Tensor::matrix(2, 2, {0, 0.5, -0.25, 0})) == Tensor::matrix(2, 2, {1, 1, 1, 1}));
  // Symmetrized row (0, 0.4, 0.2) for the first point.
  const Tensor a = subspace_affinity(Tensor::matrix(3, 3, {0, 0.4, 0.2, 0.4, 0, 0, 0.2, 0, 0}));
  CHECK(a.at(0, 0) == 1.0);
  CHECK(a.at(0, 1) == doctest::Approx(1.0));
  CHECK(a.at(0, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(subspace_affinity(Tensor::matrix(2, 2, {1, 0, 0, 0})), ValidationError);
}

TEST_CASE("subspace affinity properties") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    const Tensor c = random_coefficients(rng, n);
    const Tensor a = subspace_affinity(c);
    Tensor scaled = c;
    const double s = rng.uniform(0.1, 10.0);
    for (auto& v : scaled.values()) v *= s;
    CHECK(max_abs_diff(subspace_affinity(scaled), a) < 1e-14);
    CHECK(max_abs_diff(subspace_affinity(transpose2d(c)), a) == 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(a.at(i, i) == 1.0);
      double mx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(a.at(i, j) >= 0.0);
        CHECK(a.at(i, j) <= 1.0);
        if (j != i) mx = std::max(mx, a.at(i, j));
      }
      CHECK(mx == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
  // Dust rows stay at zero off the diagonal.
  Tensor dust({3, 3});
  dust.at(0, 1) = 1e-17;
  const Tensor a = subspace_affinity(dust);
  CHECK(a == Tensor::identity(3));
}

TEST_CASE("graph subspace affinity matches the tensor version") {
  Rng rng(3);
  const Tensor c = random_coefficients(rng, 5);
  ad::Graph g;
  CHECK(max_abs_diff(subspace_affinity(g, g.constant(c)).value(), subspace_affinity(c)) < 1e-15);
}

TEST_CASE("ridge self-expression") {
  const Tensor two = Tensor::matrix(2, 2, {1, 0, 1, 0});
  const Tensor c = ridge_self_expression(two, 10.0, false);
  for (double v : c.values()) CHECK(v == doctest::Approx(2.0 / 2.2 / 2.0).epsilon(1e-12));
  CHECK(c.at(0, 0) == doctest::Approx(0.4545).epsilon(1e-4));
  CHECK(ridge_self_expression(two, 10.0).at(0, 0) == 0.0);

  const Tensor ortho = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor big = ridge_self_expression(ortho, 1e9, false);
  CHECK(max_abs_diff(big, Tensor::identity(2)) < 1e-8);
  CHECK(max_abs_diff(ridge_self_expression(ortho, 1e9), Tensor({2, 2})) < 1e-8);
  const Tensor tiny = ridge_self_expression(two, 1e-9, false);
  for (double v : tiny.values()) CHECK(std::abs(v) < 1e-8);

  CHECK_THROWS_AS(ridge_self_expression(two, 0.0), ValidationError);
  CHECK_THROWS_AS(ridge_self_expression(Tensor({1, 3}), 1.0), ValidationError);
  CHECK_THROWS_AS(ridge_self_expression(Tensor({5001, 1}), 1.0), ValidationError);
}

TEST_CASE("ridge solution satisfies stationarity") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.below(10), d = 1 + rng.below(6);
    const double lambda1 = rng.uniform(0.5, 50.0);
    const Tensor z = random_tensor({n, d}, rng);
    const Tensor c = ridge_self_expression(z, lambda1, false);
    Eigen::MatrixXd zm(n, d), cm(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) zm(i, j) = z.at(i, j);
      for (std::size_t j = 0; j < n; ++j) cm(i, j) = c.at(i, j);
    }
    const Eigen::MatrixXd g = zm * zm.transpose();
    CHECK((2.0 * cm + lambda1 * (cm * g - g)).norm() < 1e-8);
  }
}

TEST_CASE("spectral clustering") {
  Tensor blocks({6, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) blocks.at(i, j) = (i < 3) == (j < 3) ? 1.0 : 0.0;
  const Labels l = spectral_cluster(blocks, 2);
  CHECK(l[0] == l[1]);
  CHECK(l[1] == l[2]);
  CHECK(l[3] == l[4]);
  CHECK(l[0] != l[3]);

  const Labels own = spectral_cluster(Tensor::identity(4), 4);
  CHECK(cluster_sizes(own, 4) == std::vector<std::size_t>{1, 1, 1, 1});

  CHECK_THROWS_AS(spectral_cluster(Tensor::identity(3), 4), ValidationError);
  CHECK_THROWS_AS(spectral_cluster(Tensor::matrix(2, 2, {1, 0.5, 0, 1}), 2), ValidationError);

  // A zero-degree node still gets a label.
  Tensor iso = blocks;
  for (std::size_t j = 0; j < 6; ++j) iso.at(5, j) = iso.at(j, 5) = 0.0;
  const Labels li = spectral_cluster(iso, 2);
  CHECK(li.size() == 6);
  CHECK(li[5] < 2);
}

TEST_CASE("oracle pipeline recovers noiseless subspaces") {
  SyntheticSpec spec;
  spec.seed = 3;
  const Dataset data = generate_synthetic(spec);
  const Tensor a = subspace_affinity(ridge_self_expression(data.features(), 10.0));
  CHECK(off_block_mass(a, data.labels_for_evaluation()) < 0.05);
  CHECK(accuracy(data.labels_for_evaluation(), spectral_cluster(symmetrized(a), 3)) == 1.0);
}

TEST_CASE("kmeans separates obvious blobs and is seeded") {
  Rng rng(5);
  Tensor pts({60, 2});
  Labels truth(60);
  for (std::size_t i = 0; i < 60; ++i) {
    truth[i] = i % 3;
    pts.at(i, 0) = 10.0 * static_cast<double>(truth[i]) + rng.normal() * 0.1;
    pts.at(i, 1) = rng.normal() * 0.1;
  }
  const auto r = kmeans(pts, 3, 7);
  CHECK(accuracy(truth, r.labels) == 1.0);
  CHECK(kmeans(pts, 3, 7).labels == r.labels);
  CHECK(r.centroids.shape() == Shape{3, 2});
}

TEST_CASE("affinity export formats") {
  testing::TempDir dir("affinity");
  const Tensor a = Tensor::matrix(2, 2, {1, 0.5, 0.25, -3});
  write_matrix_csv(dir / "a.csv", a);
  CHECK(read_features_csv(dir / "a.csv") == a);
  write_pgm(dir / "a.pgm", a);
  const auto bytes = read_file_bytes(dir / "a.pgm");
  const std::string head = "P5\n2 2\n255\n";
  REQUIRE(bytes.size() == head.size() + 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + head.size()) == head);
  CHECK(bytes[head.size() + 0] == 255);
  CHECK(bytes[head.size() + 1] == 128);
  CHECK(bytes[head.size() + 2] == 64);
  CHECK(bytes[head.size() + 3] == 0);
}
