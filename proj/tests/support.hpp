#pragma once
// Shared fixtures and brute-force oracles for the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "ncsc/rng.hpp"
#include "ncsc/tensor.hpp"

namespace testing {

inline ncsc::Tensor random_tensor(const ncsc::Shape& shape, ncsc::Rng& rng, double lo = -1.0, double hi = 1.0) {
  ncsc::Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<std::size_t> random_labels(ncsc::Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = static_cast<std::size_t>(rng.below(k));
  return y;
}

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ncsc_test_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

// Minimum assignment cost by trying every permutation.
inline double brute_force_assignment(const ncsc::Tensor& cost) {
  const std::size_t n = cost.dim(0);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost.at(i, perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Best accuracy over every injective relabeling of predicted clusters.
inline double brute_force_accuracy(const std::vector<std::size_t>& t, const std::vector<std::size_t>& p) {
  const std::size_t kt = *std::max_element(t.begin(), t.end()) + 1;
  const std::size_t kp = *std::max_element(p.begin(), p.end()) + 1;
  const std::size_t m = std::max(kt, kp);
  std::vector<std::size_t> map(m);
  std::iota(map.begin(), map.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i) hits += map[p[i]] == t[i];
    best = std::max(best, hits);
  } while (std::next_permutation(map.begin(), map.end()));
  return static_cast<double>(best) / static_cast<double>(t.size());
}

// Rand index pieces by looping over every pair.
inline double pair_counting_ari(const std::vector<std::size_t>& t, const std::vector<std::size_t>& p) {
  const std::size_t n = t.size();
  double both = 0, same_t = 0, same_p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool a = t[i] == t[j], b = p[i] == p[j];
      both += a && b;
      same_t += a;
      same_p += b;
    }
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double expected = same_t * same_p / pairs;
  const double max_index = 0.5 * (same_t + same_p);
  if (max_index == expected) return 1.0;
  return (both - expected) / (max_index - expected);
}

// NMI straight from label frequencies, geometric-mean normalization.
inline double direct_nmi(const std::vector<std::size_t>& t, const std::vector<std::size_t>& p) {
  const double n = static_cast<double>(t.size());
  auto entropy = [&](const std::vector<std::size_t>& y) {
    double h = 0.0;
    for (std::size_t c = 0; c <= *std::max_element(y.begin(), y.end()); ++c) {
      const double q = static_cast<double>(std::count(y.begin(), y.end(), c)) / n;
      if (q > 0) h -= q * std::log(q);
    }
    return h;
  };
  const double ht = entropy(t), hp = entropy(p);
  if (ht == 0.0 || hp == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t a = 0; a <= *std::max_element(t.begin(), t.end()); ++a) {
    for (std::size_t b = 0; b <= *std::max_element(p.begin(), p.end()); ++b) {
      double joint = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i) joint += t[i] == a && p[i] == b;
      if (joint == 0.0) continue;
      joint /= n;
      const double pa = static_cast<double>(std::count(t.begin(), t.end(), a)) / n;
      const double pb = static_cast<double>(std::count(p.begin(), p.end(), b)) / n;
      mi += joint * std::log(joint / (pa * pb));
    }
  }
  return mi / std::sqrt(ht * hp);
}

}  // namespace testing
