#include "ncsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ncsc/errors.hpp"

namespace ncsc {

namespace {

void expect_same_length(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) {
    throw ValidationError("label vectors differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw ValidationError("label vectors are empty");
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

std::vector<std::size_t> hungarian(const Tensor& cost) {
  if (cost.rank() != 2 || cost.dim(0) != cost.dim(1)) {
    throw ValidationError("assignment cost must be square, got " + shape_string(cost.shape()));
  }
  for (double v : cost.values()) {
    if (std::isnan(v)) throw ValidationError("assignment cost contains NaN");
    if (!std::isfinite(v)) throw ValidationError("assignment cost contains an infinite entry");
  }
  const std::size_t n = cost.dim(0);
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting paths with row/column potentials; index 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

std::vector<std::vector<std::size_t>> contingency(std::span<const std::size_t> y_true,
                                                  std::span<const std::size_t> y_pred) {
  expect_same_length(y_true, y_pred);
  const std::size_t kt = *std::max_element(y_true.begin(), y_true.end()) + 1;
  const std::size_t kp = *std::max_element(y_pred.begin(), y_pred.end()) + 1;
  std::vector<std::vector<std::size_t>> t(kt, std::vector<std::size_t>(kp, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) ++t[y_true[i]][y_pred[i]];
  return t;
}

double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
  const auto t = contingency(y_true, y_pred);
  const std::size_t m = std::max(t.size(), t[0].size());
  Tensor cost({m, m});
  for (std::size_t a = 0; a < t.size(); ++a) {
    for (std::size_t b = 0; b < t[a].size(); ++b) cost.at(a, b) = -static_cast<double>(t[a][b]);
  }
  const auto assign = hungarian(cost);
  std::size_t hit = 0;
  for (std::size_t a = 0; a < t.size(); ++a) {
    if (assign[a] < t[a].size()) hit += t[a][assign[a]];
  }
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double nmi(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
  const auto t = contingency(y_true, y_pred);
  const double n = static_cast<double>(y_true.size());
  std::vector<double> rows(t.size(), 0.0), cols(t[0].size(), 0.0);
  for (std::size_t a = 0; a < t.size(); ++a) {
    for (std::size_t b = 0; b < t[a].size(); ++b) {
      rows[a] += static_cast<double>(t[a][b]);
      cols[b] += static_cast<double>(t[a][b]);
    }
  }
  auto entropy = [n](const std::vector<double>& c) {
    double h = 0.0;
    for (double x : c) {
      if (x > 0.0) h -= (x / n) * std::log(x / n);
    }
    return h;
  };
  const double ht = entropy(rows), hp = entropy(cols);
  if (ht <= 0.0 || hp <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t a = 0; a < t.size(); ++a) {
    for (std::size_t b = 0; b < t[a].size(); ++b) {
      const double nab = static_cast<double>(t[a][b]);
      if (nab > 0.0) mi += (nab / n) * std::log(nab * n / (rows[a] * cols[b]));
    }
  }
  return std::clamp(mi / std::sqrt(ht * hp), 0.0, 1.0);
}

double ari(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
  const auto t = contingency(y_true, y_pred);
  if (y_true.size() < 2) throw ValidationError("ARI needs at least 2 points");
  std::vector<double> rows(t.size(), 0.0), cols(t[0].size(), 0.0);
  double index = 0.0;
  for (std::size_t a = 0; a < t.size(); ++a) {
    for (std::size_t b = 0; b < t[a].size(); ++b) {
      const double x = static_cast<double>(t[a][b]);
      index += choose2(x);
      rows[a] += x;
      cols[b] += x;
    }
  }
  double sr = 0.0, sc = 0.0;
  for (double x : rows) sr += choose2(x);
  for (double x : cols) sc += choose2(x);
  const double expected = sr * sc / choose2(static_cast<double>(y_true.size()));
  const double max_index = 0.5 * (sr + sc);
  const double denom = max_index - expected;
  // Both partitions trivial in the same way (all singletons or one block): perfect agreement.
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

Labels infer_labels(const Tensor& nu) {
  if (nu.rank() != 2) throw ValidationError("prediction matrix must be [n, k], got " + shape_string(nu.shape()));
  Labels out(nu.dim(0), 0);
  for (std::size_t i = 0; i < nu.dim(0); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < nu.dim(1); ++j) {
      if (nu.at(i, j) > nu.at(i, arg)) arg = j;
    }
    out[i] = arg;
  }
  return out;
}

std::vector<std::size_t> cluster_sizes(std::span<const std::size_t> labels, std::size_t k) {
  std::size_t m = k;
  for (auto l : labels) m = std::max(m, l + 1);
  std::vector<std::size_t> sizes(m, 0);
  for (auto l : labels) ++sizes[l];
  return sizes;
}

MetricsReport evaluate(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t k) {
  MetricsReport r;
  r.n = y_true.size();
  r.k = k;
  r.acc = accuracy(y_true, y_pred);
  r.nmi = nmi(y_true, y_pred);
  r.ari = y_true.size() >= 2 ? ari(y_true, y_pred) : 1.0;
  r.sizes = cluster_sizes(y_pred, k);
  return r;
}

std::string metrics_csv_header() { return "n,k,acc,nmi,ari,cluster_sizes"; }

std::string metrics_csv_row(const MetricsReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,", r.n, r.k, r.acc, r.nmi, r.ari);
  std::string s = buf;
  for (std::size_t i = 0; i < r.sizes.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(r.sizes[i]);
  }
  return s;
}

}  // namespace ncsc
