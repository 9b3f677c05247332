#pragma once

#include <span>
#include <string>
#include <vector>

#include "ncsc/tensor.hpp"

namespace ncsc {

using Labels = std::vector<std::size_t>;

// Minimum-cost perfect assignment on a square matrix; result[row] = column.
std::vector<std::size_t> hungarian(const Tensor& cost);

// counts[t][p]: rows indexed by true label, columns by predicted label.
std::vector<std::vector<std::size_t>> contingency(std::span<const std::size_t> y_true,
                                                  std::span<const std::size_t> y_pred);

double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred);
// Mutual information over the geometric mean of the two entropies; 0 when either entropy is 0.
double nmi(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred);
double ari(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred);

// Row-wise argmax, lowest index on ties.
Labels infer_labels(const Tensor& nu);

std::vector<std::size_t> cluster_sizes(std::span<const std::size_t> labels, std::size_t k);

struct MetricsReport {
  std::size_t n = 0;
  std::size_t k = 0;
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  std::vector<std::size_t> sizes;
};

MetricsReport evaluate(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t k);

// "n,k,acc,nmi,ari,sizes" with sizes joined by ';'.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace ncsc
