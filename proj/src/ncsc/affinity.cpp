#include "ncsc/affinity.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "ncsc/errors.hpp"
#include "ncsc/rng.hpp"

namespace ncsc {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Mat> view(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}

void expect_square(const Tensor& a, const char* what) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ValidationError(std::string(what) + " must be a square matrix, got " + shape_string(a.shape()));
  }
}

void expect_zero_diagonal(const Tensor& c) {
  for (std::size_t i = 0; i < c.dim(0); ++i) {
    if (c.at(i, i) != 0.0) {
      throw ValidationError("coefficient matrix has nonzero diagonal entry at " + std::to_string(i));
    }
  }
}

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

KMeansResult kmeans_once(const Tensor& x, std::size_t k, Rng& rng, std::size_t max_iter) {
  const std::size_t n = x.dim(0), dim = x.dim(1);
  Tensor cent({k, dim});
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  // k-means++ seeding.
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy_n(x.data() + first * dim, dim, cent.data());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.data() + i * dim, cent.data() + (c - 1) * dim, dim));
      total += d2[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    std::copy_n(x.data() + pick * dim, dim, cent.data() + c * dim);
  }

  Labels labels(n, 0);
  std::vector<double> best_d(n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(x.data() + i * dim, cent.data() + c * dim, dim);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      best_d[i] = best;
      if (labels[i] != arg) {
        labels[i] = arg;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<std::size_t> count(k, 0);
    cent.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[labels[i]];
      for (std::size_t j = 0; j < dim; ++j) cent[labels[i] * dim + j] += x[i * dim + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        // Empty cluster: move it onto the point farthest from its centroid.
        const auto far = static_cast<std::size_t>(std::max_element(best_d.begin(), best_d.end()) - best_d.begin());
        std::copy_n(x.data() + far * dim, dim, cent.data() + c * dim);
        best_d[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) cent[c * dim + j] /= static_cast<double>(count[c]);
    }
  }

  KMeansResult out{std::move(labels), std::move(cent), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    out.inertia += sq_dist(x.data() + i * dim, out.centroids.data() + out.labels[i] * dim, dim);
  }
  return out;
}

}  // namespace

Tensor class_affinity(const Tensor& nu) {
  if (nu.rank() != 2) throw ValidationError("prediction matrix must be [n, k], got " + shape_string(nu.shape()));
  const std::size_t n = nu.dim(0), k = nu.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += nu.at(i, j) * nu.at(i, j);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-9) {
      throw ValidationError("prediction row " + std::to_string(i) + " has l2 norm " + std::to_string(std::sqrt(s)) +
                            ", expected 1");
    }
  }
  Tensor a({n, n});
  Eigen::Map<Mat>(a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)).noalias() =
      view(nu) * view(nu).transpose();
  for (auto& v : a.values()) v = std::clamp(v, 0.0, 1.0);
  return a;
}

std::vector<double> subspace_row_scales(const Tensor& c) {
  expect_square(c, "coefficient matrix");
  const std::size_t n = c.dim(0);
  std::vector<double> scale(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, 0.5 * (std::abs(c.at(i, j)) + std::abs(c.at(j, i))));
    }
    if (m >= kAffinityDust) scale[i] = 1.0 / m;
  }
  return scale;
}

Tensor subspace_affinity(const Tensor& c) {
  expect_square(c, "coefficient matrix");
  expect_zero_diagonal(c);
  const std::size_t n = c.dim(0);
  const auto scale = subspace_row_scales(c);
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a.at(i, j) = i == j ? 1.0 : 0.5 * (std::abs(c.at(i, j)) + std::abs(c.at(j, i))) * scale[i];
    }
    // Division can land a hair above 1 only through rounding of the maximum itself.
    for (std::size_t j = 0; j < n; ++j) a.at(i, j) = std::min(a.at(i, j), 1.0);
  }
  return a;
}

ad::Var class_affinity(ad::Var nu) { return ad::matmul(nu, ad::transpose(nu)); }

ad::Var subspace_affinity(ad::Graph& g, ad::Var c) {
  const Tensor& cv = c.value();
  expect_square(cv, "coefficient matrix");
  expect_zero_diagonal(cv);
  const std::size_t n = cv.dim(0);
  const auto scale = subspace_row_scales(cv);
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w.at(i, j) = i == j ? 0.0 : 0.5 * scale[i];
  }
  ad::Var a = ad::abs(c);
  ad::Var s = ad::add(a, ad::transpose(a));
  return ad::add(ad::multiply(s, g.constant(std::move(w))), g.constant(Tensor::identity(n)));
}

Tensor ridge_self_expression(const Tensor& z, double lambda1, bool project) {
  if (!(lambda1 > 0.0) || !std::isfinite(lambda1)) {
    throw ValidationError("lambda1 must be a positive finite number, got " + std::to_string(lambda1));
  }
  if (z.rank() != 2 || z.dim(0) < 2) {
    throw ValidationError("ridge self-expression needs at least 2 rows, got " + shape_string(z.shape()));
  }
  const std::size_t n = z.dim(0);
  if (n > kMaxDenseSolve) {
    throw ValidationError("ridge self-expression limited to " + std::to_string(kMaxDenseSolve) + " points, got " +
                          std::to_string(n));
  }
  const Mat g = view(z) * view(z).transpose();
  Mat reg = g;
  reg.diagonal().array() += 2.0 / lambda1;
  // G and (G + rI) commute, so C = G (G + rI)^-1 = (G + rI)^-1 G.
  const Mat cm = reg.ldlt().solve(g);
  Tensor c({n, n});
  Eigen::Map<Mat>(c.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = cm;
  if (project) {
    for (std::size_t i = 0; i < n; ++i) c.at(i, i) = 0.0;
  }
  return c;
}

KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iter) {
  if (points.rank() != 2) throw ValidationError("k-means expects [n, dim] points, got " + shape_string(points.shape()));
  if (k == 0 || k > points.dim(0)) {
    throw ValidationError("k-means needs 1 <= k <= n, got k=" + std::to_string(k) + " n=" +
                          std::to_string(points.dim(0)));
  }
  if (restarts == 0) throw ValidationError("k-means needs at least one restart");
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    auto res = kmeans_once(points, k, rng, max_iter);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

Tensor symmetrized(const Tensor& a) {
  expect_square(a, "affinity");
  Tensor s(a.shape());
  const std::size_t n = a.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s.at(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));
  }
  return s;
}

Labels spectral_cluster(const Tensor& a, std::size_t k, std::uint64_t seed, std::size_t restarts) {
  expect_square(a, "affinity");
  const std::size_t n = a.dim(0);
  if (k == 0 || k > n) {
    throw ValidationError("spectral clustering needs 1 <= k <= n, got k=" + std::to_string(k) + " n=" +
                          std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a.at(i, j);
      if (!std::isfinite(v) || v < 0.0) throw ValidationError("affinity must be finite and non-negative");
      if (std::abs(v - a.at(j, i)) > 1e-9) {
        throw ValidationError("affinity is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }

  Eigen::VectorXd dinv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a.at(i, j);
    dinv[static_cast<Eigen::Index>(i)] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  // Smallest eigenvectors of I - D^-1/2 A D^-1/2 are the largest of D^-1/2 A D^-1/2.
  const Eigen::MatrixXd m = dinv.asDiagonal() * Eigen::MatrixXd(view(a)) * dinv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw RuntimeFailure("eigen decomposition failed in spectral clustering");

  Tensor emb({n, k});
  std::vector<std::size_t> live, isolated;
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      // Eigenvalues ascend; take the last k columns, largest first.
      const double v = eig.eigenvectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n - 1 - c));
      emb.at(i, c) = v;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (dinv[static_cast<Eigen::Index>(i)] == 0.0 || norm < 1e-300) {
      isolated.push_back(i);
      continue;
    }
    for (std::size_t c = 0; c < k; ++c) emb.at(i, c) /= norm;
    live.push_back(i);
  }
  if (live.size() < k) throw ValidationError("affinity has fewer than k connected points");

  const auto res = kmeans(gather_rows(emb, live), k, seed, restarts);
  Labels labels(n, 0);
  for (std::size_t t = 0; t < live.size(); ++t) labels[live[t]] = res.labels[t];
  for (std::size_t i : isolated) {
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = sq_dist(emb.data() + i * k, res.centroids.data() + c * k, k);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
  }
  return labels;
}

double off_block_mass(const Tensor& a, std::span<const std::size_t> labels) {
  expect_square(a, "affinity");
  if (labels.size() != a.dim(0)) throw ValidationError("label count does not match affinity size");
  double total = 0.0, off = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i == j) continue;
      total += a.at(i, j);
      if (labels[i] != labels[j]) off += a.at(i, j);
    }
  }
  return total > 0.0 ? off / total : 0.0;
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor& a) {
  if (a.rank() != 2) throw ValidationError("CSV export needs a matrix");
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  char buf[32];
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < a.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", a.at(i, j));
      if (j) f << ',';
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

void write_pgm(const std::filesystem::path& path, const Tensor& a) {
  if (a.rank() != 2) throw ValidationError("PGM export needs a matrix");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  f << "P5\n" << a.dim(1) << ' ' << a.dim(0) << "\n255\n";
  for (double v : a.values()) {
    const double c = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * c))));
  }
  if (!f) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

}  // namespace ncsc
