#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ncsc/autodiff.hpp"

namespace ncsc {

using Labels = std::vector<std::size_t>;

// A_c = nu nu^T for row-normalized prediction vectors, clipped to [0, 1].
// Rows whose l2 norm is off by more than 1e-9 are rejected.
Tensor class_affinity(const Tensor& nu);

// Rows whose largest off-diagonal entry is below this are left at zero.
inline constexpr double kAffinityDust = 1e-15;

// S = (|C| + |C^T|) / 2, each row divided by its largest off-diagonal entry,
// diagonal set to 1. Requires diag(C) = 0.
Tensor subspace_affinity(const Tensor& c);

// Per-row reciprocal of the largest off-diagonal of S (0 for dust rows).
std::vector<double> subspace_row_scales(const Tensor& c);

// Differentiable versions used inside the training objective. The row
// normalizers of A_s are taken from the current value of C and held constant.
ad::Var class_affinity(ad::Var nu);
ad::Var subspace_affinity(ad::Graph& g, ad::Var c);

// Closed-form minimizer of ||C||_F^2 + lambda1/2 ||Z - C Z||_F^2 for points as
// rows: C = G (G + 2/lambda1 I)^-1 with G = Z Z^T. The diagonal is zeroed
// afterwards unless `project` is false.
inline constexpr std::size_t kMaxDenseSolve = 5000;
Tensor ridge_self_expression(const Tensor& z, double lambda1, bool project = true);

struct KMeansResult {
  Labels labels;
  Tensor centroids;  // [k, dim]
  double inertia = 0.0;
};

// Lloyd iterations from k-means++ seeding; keeps the restart with the lowest
// inertia. Deterministic given the seed.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                    std::size_t max_iter = 300);

// Normalized-Laplacian embedding (k smallest eigenvectors of I - D^-1/2 A D^-1/2),
// rows scaled to unit length, then k-means. A must be symmetric and non-negative.
Labels spectral_cluster(const Tensor& a, std::size_t k, std::uint64_t seed = 0, std::size_t restarts = 10);

// (A + A^T) / 2.
Tensor symmetrized(const Tensor& a);

// Fraction of sum_{i != j} A(i, j) falling on pairs with different labels.
double off_block_mass(const Tensor& a, std::span<const std::size_t> labels);

void write_matrix_csv(const std::filesystem::path& path, const Tensor& a);
// 8-bit binary PGM with value round(255 * clamp(A, 0, 1)).
void write_pgm(const std::filesystem::path& path, const Tensor& a);

}  // namespace ncsc
