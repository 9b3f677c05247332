#include "ncsc/data.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "ncsc/errors.hpp"
#include "ncsc/rng.hpp"

namespace ncsc {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) {
    throw ValidationError("IDX data truncated reading " + std::string(what) + " at byte offset " +
                          std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

void expect_magic(std::uint32_t got, std::uint32_t want, const char* kind) {
  if (got != want) {
    throw ValidationError(std::string("IDX ") + kind + " file has magic " + hex32(got) + " at byte offset 0, expected " +
                          hex32(want));
  }
}

double parse_double(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
    throw ValidationError("'" + path.string() + "' line " + std::to_string(line) + ": bad number '" + cell + "'");
  }
  return v;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(Nonlinearity w) {
  switch (w) {
    case Nonlinearity::None: return "none";
    case Nonlinearity::TanhWarp: return "tanh-warp";
    case Nonlinearity::SquareWarp: return "square-warp";
  }
  return "?";
}

Nonlinearity nonlinearity_from_string(const std::string& s) {
  if (s == "none") return Nonlinearity::None;
  if (s == "tanh-warp") return Nonlinearity::TanhWarp;
  if (s == "square-warp") return Nonlinearity::SquareWarp;
  throw ValidationError("unknown nonlinearity '" + s + "' (expected none, tanh-warp or square-warp)");
}

std::string to_string(Scaling s) { return s == Scaling::MaxAbs ? "max-abs" : "min-max"; }

Scaling scaling_from_string(const std::string& s) {
  if (s == "max-abs") return Scaling::MaxAbs;
  if (s == "min-max") return Scaling::MinMax;
  throw ValidationError("unknown scaling '" + s + "' (expected max-abs or min-max)");
}

Dataset::Dataset(Tensor features, Shape sample_shape, std::optional<Labels> labels, std::string provenance)
    : features_(std::move(features)),
      sample_shape_(std::move(sample_shape)),
      labels_(std::move(labels)),
      provenance_(std::move(provenance)) {
  if (features_.rank() != 2) {
    throw ValidationError("dataset features must be [n, features], got " + shape_string(features_.shape()));
  }
  if (numel(sample_shape_) != features_.dim(1)) {
    throw ValidationError("sample shape " + shape_string(sample_shape_) + " does not match " +
                          std::to_string(features_.dim(1)) + " features");
  }
  if (labels_ && labels_->size() != features_.dim(0)) {
    throw ValidationError("dataset has " + std::to_string(features_.dim(0)) + " points but " +
                          std::to_string(labels_->size()) + " labels");
  }
}

std::size_t Dataset::num_classes() const {
  if (!labels_ || labels_->empty()) return 0;
  return *std::max_element(labels_->begin(), labels_->end()) + 1;
}

const Labels& Dataset::labels_for_evaluation() const {
  if (!labels_) throw ValidationError("dataset '" + provenance_ + "' has no labels");
  return *labels_;
}

namespace {

void validate_spec(const SyntheticSpec& s) {
  if (s.k < 1 || s.d < 1 || s.D < 1 || s.n_per < 1) {
    throw ValidationError("synthetic k, d, D and n_per must all be >= 1");
  }
  if (s.D < s.d * s.k) {
    throw ValidationError("synthetic spec needs D >= d * k, got D=" + std::to_string(s.D) + " < " +
                          std::to_string(s.d * s.k));
  }
  if (s.n_per < s.d + 1) {
    throw ValidationError("synthetic spec needs n_per >= d + 1, got n_per=" + std::to_string(s.n_per) + " < " +
                          std::to_string(s.d + 1));
  }
  if (!(s.noise_sigma >= 0.0) || !std::isfinite(s.noise_sigma)) {
    throw ValidationError("synthetic noise_sigma must be >= 0");
  }
}

std::vector<Tensor> draw_bases(const SyntheticSpec& spec, Rng& rng) {
  std::vector<Tensor> out;
  for (std::size_t c = 0; c < spec.k; ++c) {
    Eigen::MatrixXd g(spec.D, spec.d);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    Tensor b({spec.D, spec.d});
    for (std::size_t i = 0; i < spec.D; ++i) {
      for (std::size_t j = 0; j < spec.d; ++j) b.at(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<Tensor> synthetic_bases(const SyntheticSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);
  return draw_bases(spec, rng);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);
  const auto bases = draw_bases(spec, rng);
  const std::size_t n = spec.k * spec.n_per;
  Tensor x({n, spec.D});
  Labels y(n);
  std::vector<double> coef(spec.d);
  for (std::size_t c = 0; c < spec.k; ++c) {
    for (std::size_t p = 0; p < spec.n_per; ++p) {
      const std::size_t row = c * spec.n_per + p;
      y[row] = c;
      for (auto& v : coef) v = rng.normal();
      for (std::size_t i = 0; i < spec.D; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < spec.d; ++j) s += bases[c].at(i, j) * coef[j];
        x.at(row, i) = s;
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    for (auto& v : x.values()) v += spec.noise_sigma * rng.normal();
  }
  // Coordinates of a unit-Gaussian point on a d-dim subspace have variance d / D;
  // the warp gain brings them to unit scale so the nonlinearity actually bends.
  const double gain = std::sqrt(static_cast<double>(spec.D) / static_cast<double>(spec.d));
  switch (spec.nonlinearity) {
    case Nonlinearity::None: break;
    case Nonlinearity::TanhWarp:
      for (auto& v : x.values()) v = std::tanh(v * gain);
      break;
    case Nonlinearity::SquareWarp:
      for (auto& v : x.values()) v = v < 0.0 ? -v * v : v * v;
      break;
  }
  if (spec.scaling == Scaling::MaxAbs) {
    double m = 0.0;
    for (double v : x.values()) m = std::max(m, std::abs(v));
    if (m > 0.0) {
      for (auto& v : x.values()) v /= m;
    }
  } else {
    const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
    const double a = *lo, span = *hi - *lo;
    for (auto& v : x.values()) v = span > 0.0 ? (v - a) / span : 0.0;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "synthetic k=%zu d=%zu D=%zu n_per=%zu noise=%g nonlinearity=%s scaling=%s seed=%llu",
                spec.k, spec.d, spec.D, spec.n_per, spec.noise_sigma, to_string(spec.nonlinearity).c_str(),
                to_string(spec.scaling).c_str(), static_cast<unsigned long long>(spec.seed));
  return Dataset(std::move(x), {spec.D}, std::move(y), buf);
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  expect_magic(read_be32(bytes, 0, "magic"), kIdxImagesMagic, "images");
  const std::size_t n = read_be32(bytes, 4, "count");
  IdxImages img;
  img.rows = read_be32(bytes, 8, "rows");
  img.cols = read_be32(bytes, 12, "cols");
  if (img.rows == 0 || img.cols == 0) throw ValidationError("IDX images have a zero dimension at byte offset 8");
  const std::size_t payload = n * img.rows * img.cols;
  if (bytes.size() - 16 < payload) {
    throw ValidationError("IDX images truncated: expected " + std::to_string(payload) + " pixel bytes from offset 16, file ends at byte offset " +
                          std::to_string(bytes.size()));
  }
  if (bytes.size() - 16 > payload) {
    throw ValidationError("IDX images have trailing data at byte offset " + std::to_string(16 + payload));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  expect_magic(read_be32(bytes, 0, "magic"), kIdxLabelsMagic, "labels");
  const std::size_t n = read_be32(bytes, 4, "count");
  if (bytes.size() - 8 < n) {
    throw ValidationError("IDX labels truncated: expected " + std::to_string(n) + " label bytes from offset 8, file ends at byte offset " +
                          std::to_string(bytes.size()));
  }
  if (bytes.size() - 8 > n) {
    throw ValidationError("IDX labels have trailing data at byte offset " + std::to_string(8 + n));
  }
  return {bytes.begin() + 8, bytes.end()};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count()));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

bool is_idx_images_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  unsigned char m[4] = {0, 0, 0, 0};
  f.read(reinterpret_cast<char*>(m), 4);
  return f.gcount() == 4 && m[0] == 0 && m[1] == 0 && m[2] == 8 && m[3] == 3;
}

namespace {

bool is_idx_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  unsigned char m[4] = {0, 0, 0, 0};
  f.read(reinterpret_cast<char*>(m), 4);
  return f.gcount() == 4 && m[0] == 0 && m[1] == 0 && m[2] == 8;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const IdxImages img = parse_idx_images(read_file_bytes(images));
  const std::size_t n = img.count();
  const std::size_t f = img.rows * img.cols;
  if (n == 0) throw ValidationError("IDX images file '" + images.string() + "' holds no images");
  Tensor x({n, f});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) x[i] = static_cast<double>(img.pixels[i]) / 255.0;
  std::optional<Labels> y;
  if (labels) {
    const auto raw = parse_idx_labels(read_file_bytes(*labels));
    if (raw.size() != n) {
      throw ValidationError("IDX labels count " + std::to_string(raw.size()) + " (byte offset 4) does not match " +
                            std::to_string(n) + " images");
    }
    y = Labels(raw.begin(), raw.end());
  }
  return Dataset(std::move(x), {1, img.rows, img.cols}, std::move(y), "idx " + images.filename().string());
}

Dataset subset(const Dataset& data, std::size_t n, bool balanced, std::uint64_t seed) {
  const std::size_t total = data.size();
  if (n == 0 || n > total) {
    throw ValidationError("subset size " + std::to_string(n) + " must be in 1.." + std::to_string(total));
  }
  Rng rng(seed);
  std::vector<std::size_t> picked;
  std::string note;
  if (balanced) {
    const Labels& y = data.labels_for_evaluation();
    const std::size_t k = data.num_classes();
    const std::size_t per = n / k;
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < total; ++i) by_class[y[i]].push_back(i);
    for (std::size_t c = 0; c < k; ++c) {
      auto& idx = by_class[c];
      if (idx.size() < per) {
        throw ValidationError("balanced subset needs " + std::to_string(per) + " points of class " + std::to_string(c) +
                              ", only " + std::to_string(idx.size()) + " available");
      }
      rng.shuffle(std::span<std::size_t>(idx));
      picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per));
    }
    std::sort(picked.begin(), picked.end());
    note = " (label-aware balanced sampling)";
  } else if (n == total) {
    picked.resize(total);
    for (std::size_t i = 0; i < total; ++i) picked[i] = i;
  } else {
    auto perm = rng.permutation(total);
    picked.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(picked.begin(), picked.end());
  }
  std::optional<Labels> y;
  if (data.has_labels()) {
    const Labels& all = data.labels_for_evaluation();
    Labels sub;
    for (auto i : picked) sub.push_back(all[i]);
    y = std::move(sub);
  }
  return Dataset(gather_rows(data.features(), picked), data.sample_shape(), std::move(y),
                 data.provenance() + " | subset n=" + std::to_string(picked.size()) + " seed=" + std::to_string(seed) +
                     note);
}

void write_features_csv(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 2) throw ValidationError("feature CSV needs a matrix");
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  char buf[32];
  for (std::size_t i = 0; i < features.dim(0); ++i) {
    for (std::size_t j = 0; j < features.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", features.at(i, j));
      if (j) f << ',';
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

void write_labels_csv(const std::filesystem::path& path, std::span<const std::size_t> labels) {
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  for (auto l : labels) f << l << '\n';
  if (!f) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

Tensor read_features_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open '" + path.string() + "'");
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(f, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      values.push_back(parse_double(trim(cell), path, line_no));
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                            std::to_string(cols) + " columns, got " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw ValidationError("'" + path.string() + "' holds no rows");
  return Tensor({rows, cols}, std::move(values));
}

Labels read_labels_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open '" + path.string() + "'");
  Labels out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(line.c_str(), &end, 10);
    if (end != line.c_str() + line.size() || line[0] == '-') {
      throw ValidationError("'" + path.string() + "' line " + std::to_string(line_no) + ": bad label '" + line + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& features, const std::optional<std::filesystem::path>& labels) {
  if (is_idx_images_file(features)) {
    if (labels && !is_idx_file(*labels)) {
      Dataset d = load_idx(features, std::nullopt);
      Labels y = read_labels_csv(*labels);
      return Dataset(d.features(), d.sample_shape(), std::move(y), d.provenance());
    }
    return load_idx(features, labels);
  }
  Tensor x = read_features_csv(features);
  std::optional<Labels> y;
  if (labels) {
    if (is_idx_file(*labels)) {
      const auto raw = parse_idx_labels(read_file_bytes(*labels));
      y = Labels(raw.begin(), raw.end());
    } else {
      y = read_labels_csv(*labels);
    }
  }
  const std::size_t f = x.dim(1);
  return Dataset(std::move(x), {f}, std::move(y), "csv " + features.filename().string());
}

}  // namespace ncsc
