#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncsc/tensor.hpp"

namespace ncsc {

using Labels = std::vector<std::size_t>;

enum class Nonlinearity { None, TanhWarp, SquareWarp };
std::string to_string(Nonlinearity w);
Nonlinearity nonlinearity_from_string(const std::string& s);

// How synthetic features are brought into range. MaxAbs divides by the largest
// magnitude (range [-1, 1], subspaces stay linear); MinMax maps to [0, 1].
enum class Scaling { MaxAbs, MinMax };
std::string to_string(Scaling s);
Scaling scaling_from_string(const std::string& s);

struct SyntheticSpec {
  std::size_t k = 3;
  std::size_t d = 3;
  std::size_t D = 30;
  std::size_t n_per = 100;
  double noise_sigma = 0.0;
  Nonlinearity nonlinearity = Nonlinearity::None;
  Scaling scaling = Scaling::MaxAbs;
  std::uint64_t seed = 0;
};

// Features plus held-out labels. Training code reads features() only; labels
// are reached through labels_for_evaluation().
class Dataset {
 public:
  Dataset() = default;
  Dataset(Tensor features, Shape sample_shape, std::optional<Labels> labels, std::string provenance);

  const Tensor& features() const { return features_; }
  const Shape& sample_shape() const { return sample_shape_; }
  std::size_t size() const { return features_.empty() ? 0 : features_.dim(0); }
  const std::string& provenance() const { return provenance_; }
  bool has_labels() const { return labels_.has_value(); }
  std::size_t num_classes() const;

  const Labels& labels_for_evaluation() const;

 private:
  Tensor features_;
  Shape sample_shape_;
  std::optional<Labels> labels_;
  std::string provenance_;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Orthonormal [D, d] bases drawn for each cluster, in generation order. Exposed
// so tests can measure residuals against the true subspaces.
std::vector<Tensor> synthetic_bases(const SyntheticSpec& spec);

// IDX (big-endian): images magic 0x00000803, labels magic 0x00000801.
struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // n * rows * cols
  std::size_t count() const { return rows * cols == 0 ? 0 : pixels.size() / (rows * cols); }
};

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Pixels divided by 255; sample shape {1, rows, cols}.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels);
bool is_idx_images_file(const std::filesystem::path& path);

// Seeded sample of n points; balanced mode takes n / classes from each class.
Dataset subset(const Dataset& data, std::size_t n, bool balanced, std::uint64_t seed);

// One row per point, %.17g features; labels one per line.
void write_features_csv(const std::filesystem::path& path, const Tensor& features);
void write_labels_csv(const std::filesystem::path& path, std::span<const std::size_t> labels);
Tensor read_features_csv(const std::filesystem::path& path);
Labels read_labels_csv(const std::filesystem::path& path);

// Features from CSV or IDX (detected by magic); labels from CSV or IDX.
Dataset load_dataset(const std::filesystem::path& features, const std::optional<std::filesystem::path>& labels);

}  // namespace ncsc
