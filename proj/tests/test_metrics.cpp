#include <doctest.h>

#include <set>

#include "ncsc/errors.hpp"
#include "ncsc/metrics.hpp"
#include "support.hpp"

using namespace ncsc;

using L = std::vector<std::size_t>;

TEST_CASE("hungarian examples") {
  auto a = hungarian(Tensor::matrix(2, 2, {1, 2, 2, 1}));
  CHECK(a == L{0, 1});
  Tensor z({3, 3}, 1.0);
  for (std::size_t i = 0; i < 3; ++i) z.at(i, i) = 0.0;
  CHECK(hungarian(z) == L{0, 1, 2});
  Tensor nan = Tensor::matrix(2, 2, {1, 2, 3, 4});
  nan.at(1, 1) = std::nan("");
  CHECK_THROWS_AS(hungarian(nan), ValidationError);
  CHECK_THROWS_AS(hungarian(Tensor({2, 3})), ValidationError);
}

TEST_CASE("hungarian matches exhaustive search") {
  Rng rng(1);
  for (std::size_t n = 1; n <= 7; ++n) {
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor cost = testing::random_tensor({n, n}, rng, -5.0, 5.0);
      const auto a = hungarian(cost);
      double total = 0.0;
      L seen(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        total += cost.at(i, a[i]);
        ++seen[a[i]];
      }
      CHECK(seen == L(n, 1));
      CHECK(total == doctest::Approx(testing::brute_force_assignment(cost)).epsilon(1e-12));
    }
  }
}

TEST_CASE("metric examples") {
  const L t = {0, 0, 1, 1};
  CHECK(accuracy(t, t) == 1.0);
  CHECK(accuracy(t, L{1, 1, 0, 0}) == 1.0);
  CHECK(accuracy(t, L{0, 1, 0, 1}) == 0.5);
  CHECK(nmi(t, t) == doctest::Approx(1.0));
  CHECK(nmi(t, L{0, 1, 0, 1}) == doctest::Approx(0.0));
  CHECK(nmi(t, L{0, 0, 0, 0}) == 0.0);
  CHECK(ari(t, t) == 1.0);
  // Pair counts: index 0, expected 2/3, max 2.
  CHECK(ari(t, L{0, 1, 0, 1}) == doctest::Approx(-0.5));
  CHECK(ari(t, L{0, 0, 0, 0}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(accuracy(t, L{0, 1}), ValidationError);
  CHECK_THROWS_AS(nmi(t, L{0, 1}), ValidationError);
  CHECK_THROWS_AS(ari(L{0}, L{0}), ValidationError);
}

TEST_CASE("metrics match brute-force oracles") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(7), k = 1 + rng.below(3);
    const L t = testing::random_labels(rng, n, k), p = testing::random_labels(rng, n, k);
    CHECK(accuracy(t, p) == testing::brute_force_accuracy(t, p));
    CHECK(nmi(t, p) == doctest::Approx(testing::direct_nmi(t, p)).epsilon(1e-12));
    CHECK(ari(t, p) == doctest::Approx(testing::pair_counting_ari(t, p)).epsilon(1e-12));
  }
}

TEST_CASE("metrics are invariant to relabeling") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(20), k = 2 + rng.below(4);
    const L t = testing::random_labels(rng, n, k), p = testing::random_labels(rng, n, k);
    auto perm = rng.permutation(k);
    L q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = perm[p[i]];
    CHECK(accuracy(t, q) == accuracy(t, p));
    CHECK(nmi(t, q) == doctest::Approx(nmi(t, p)).epsilon(1e-12));
    CHECK(ari(t, q) == doctest::Approx(ari(t, p)).epsilon(1e-12));
    if (std::set<std::size_t>(t.begin(), t.end()).size() >= 2) {
      CHECK(nmi(t, t) == doctest::Approx(1.0));
      CHECK(ari(t, t) == 1.0);
    }
  }
}

TEST_CASE("balanced predictions score at least 1/k") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + rng.below(4), per = 1 + rng.below(5), n = k * per;
    L t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = p[i] = i % k;
    rng.shuffle(std::span<std::size_t>(p));
    CHECK(accuracy(t, p) >= 1.0 / static_cast<double>(k) - 1e-15);
  }
}

TEST_CASE("infer labels") {
  CHECK(infer_labels(Tensor::matrix(2, 2, {1, 0, 0, 1})) == L{0, 1});
  CHECK(infer_labels(Tensor::matrix(1, 3, {0.1, 0.7, 0.2})) == L{1});
  CHECK(infer_labels(Tensor::matrix(1, 2, {0.5, 0.5})) == L{0});
}

TEST_CASE("metrics report row") {
  const L t = {0, 0, 1, 1};
  const auto r = evaluate(t, L{1, 1, 0, 0}, 3);
  CHECK(metrics_csv_header() == "n,k,acc,nmi,ari,cluster_sizes");
  CHECK(metrics_csv_row(r) == "4,3,1.000000,1.000000,1.000000,2;2;0");
}
