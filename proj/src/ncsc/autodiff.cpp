#include "ncsc/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <utility>

#include "ncsc/errors.hpp"

namespace ncsc::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

constexpr std::array<std::pair<OpKind, std::string_view>, 18> kOpNames{{
    {OpKind::Leaf, "leaf"},
    {OpKind::MatMul, "matmul"},
    {OpKind::Add, "add"},
    {OpKind::Subtract, "subtract"},
    {OpKind::Multiply, "elementwise-multiply"},
    {OpKind::Relu, "relu"},
    {OpKind::SoftmaxRows, "softmax-rows"},
    {OpKind::L2NormalizeRows, "l2-normalize-rows"},
    {OpKind::Conv2d, "conv2d-strided"},
    {OpKind::ConvTranspose2d, "conv2d-transpose-strided"},
    {OpKind::Reshape, "reshape"},
    {OpKind::Sum, "sum"},
    {OpKind::Mean, "mean"},
    {OpKind::FrobeniusNormSquared, "frobenius-norm-squared"},
    {OpKind::Log, "log"},
    {OpKind::ScalarMultiply, "scalar-multiply"},
    {OpKind::Transpose, "transpose"},
    {OpKind::Abs, "abs"},
}};

ConstMapMat as_matrix(const Tensor& t) {
  return ConstMapMat(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                     static_cast<Eigen::Index>(t.dim(1)));
}
MapMat as_matrix(Tensor& t) {
  return MapMat(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                static_cast<Eigen::Index>(t.dim(1)));
}

[[noreturn]] void shape_error(OpKind kind, const std::string& what) {
  throw ValidationError(std::string(to_string(kind)) + ": " + what);
}

void expect_arity(OpKind kind, std::size_t got, std::size_t lo, std::size_t hi) {
  if (got < lo || got > hi) {
    shape_error(kind, "expected " + std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) +
                          " inputs, got " + std::to_string(got));
  }
}

void expect_rank(OpKind kind, const Tensor& t, std::size_t rank, const char* which) {
  if (t.rank() != rank) {
    shape_error(kind, std::string(which) + " must have rank " + std::to_string(rank) + ", got " +
                          shape_string(t.shape()));
  }
}

// Row vector broadcast for add/subtract: b is [m] or [1, m] and a is [n, m].
bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() == b.shape()) return false;
  const std::size_t m = a.dim(1);
  return (b.rank() == 1 && b.dim(0) == m) || (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == m);
}

struct ConvGeometry {
  std::size_t channels, height, width;  // the "image" side
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;  // the "grid" side
};

// cols[(c*k + kh)*k + kw][oh*out_w + ow] = img[c][oh*s - p + kh][ow*s - p + kw]
void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t grid = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        double* row = cols + ((c * g.kernel + kh) * g.kernel + kw) * grid;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t grid = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t kh = 0; kh < g.kernel; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel; ++kw) {
        const double* row = cols + ((c * g.kernel + kh) * g.kernel + kw) * grid;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = img + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) {
              dst[static_cast<std::size_t>(iw)] += src[ow];
            }
          }
        }
      }
    }
  }
}

void check_conv_inputs(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  expect_arity(kind, in.size(), 2, 3);
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  expect_rank(kind, x, 4, "input");
  expect_rank(kind, w, 4, "weight");
  if (w.dim(2) != w.dim(3)) shape_error(kind, "kernel must be square, got " + shape_string(w.shape()));
  if (attrs.stride == 0) shape_error(kind, "stride must be >= 1");
  if (x.dim(1) != w.dim(kind == OpKind::Conv2d ? 1 : 0)) {
    shape_error(kind, "input channels " + std::to_string(x.dim(1)) + " do not match weight " +
                          shape_string(w.shape()));
  }
  if (in.size() == 3) {
    const std::size_t cout = kind == OpKind::Conv2d ? w.dim(0) : w.dim(1);
    if (in[2]->rank() != 1 || in[2]->dim(0) != cout) {
      shape_error(kind, "bias must be [" + std::to_string(cout) + "], got " +
                            shape_string(in[2]->shape()));
    }
  }
}

Tensor conv2d_forward(std::span<const Tensor* const> in, const OpAttrs& a) {
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (h + 2 * a.padding < k || wd + 2 * a.padding < k) {
    shape_error(OpKind::Conv2d, "kernel " + std::to_string(k) + " larger than padded input " +
                                    shape_string(x.shape()));
  }
  const ConvGeometry g{cin, h, wd, k, a.stride, a.padding,
                       conv_output_size(h, k, a.stride, a.padding),
                       conv_output_size(wd, k, a.stride, a.padding)};
  const std::size_t grid = g.out_h * g.out_w, patch = cin * k * k;
  Tensor out({n, cout, g.out_h, g.out_w});
  RowMat cols(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(grid));
  ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(patch));
  for (std::size_t s = 0; s < n; ++s) {
    im2col(x.data() + s * cin * h * wd, g, cols.data());
    MapMat o(out.data() + s * cout * grid, static_cast<Eigen::Index>(cout),
             static_cast<Eigen::Index>(grid));
    o.noalias() = wm * cols;
    if (in.size() == 3) {
      for (std::size_t c = 0; c < cout; ++c) o.row(static_cast<Eigen::Index>(c)).array() += (*in[2])[c];
    }
  }
  return out;
}

Tensor conv_transpose2d_forward(std::span<const Tensor* const> in, const OpAttrs& a) {
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  if (a.output_padding >= std::max<std::size_t>(a.stride, 1) && a.output_padding > 0) {
    shape_error(OpKind::ConvTranspose2d, "output_padding must be smaller than stride");
  }
  if ((h - 1) * a.stride + k + a.output_padding <= 2 * a.padding) {
    shape_error(OpKind::ConvTranspose2d, "padding too large for input " + shape_string(x.shape()));
  }
  const std::size_t oh = conv_transpose_output_size(h, k, a.stride, a.padding, a.output_padding);
  const std::size_t ow = conv_transpose_output_size(wd, k, a.stride, a.padding, a.output_padding);
  const ConvGeometry g{cout, oh, ow, k, a.stride, a.padding, h, wd};
  const std::size_t grid = h * wd, patch = cout * k * k;
  Tensor out({n, cout, oh, ow});
  RowMat cols(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(grid));
  ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(patch));
  for (std::size_t s = 0; s < n; ++s) {
    ConstMapMat xs(x.data() + s * cin * grid, static_cast<Eigen::Index>(cin),
                   static_cast<Eigen::Index>(grid));
    cols.noalias() = wm.transpose() * xs;
    double* o = out.data() + s * cout * oh * ow;
    col2im(cols.data(), g, o);
    if (in.size() == 3) {
      for (std::size_t c = 0; c < cout; ++c) {
        const double b = (*in[2])[c];
        for (std::size_t i = 0; i < oh * ow; ++i) o[c * oh * ow + i] += b;
      }
    }
  }
  return out;
}

// Gradients of a conv op with respect to each input; empty tensors where not needed.
std::vector<Tensor> conv2d_backward(std::span<const Tensor* const> in, const Tensor& gout,
                                    const OpAttrs& a, std::span<const bool> need) {
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const ConvGeometry g{cin, h, wd, k, a.stride, a.padding, gout.dim(2), gout.dim(3)};
  const std::size_t grid = g.out_h * g.out_w, patch = cin * k * k;
  std::vector<Tensor> grads(in.size());
  if (need[0]) grads[0] = Tensor(x.shape());
  if (need[1]) grads[1] = Tensor(w.shape());
  if (in.size() == 3 && need[2]) grads[2] = Tensor(in[2]->shape());
  RowMat cols(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(grid));
  RowMat dcols(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(grid));
  ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(patch));
  for (std::size_t s = 0; s < n; ++s) {
    ConstMapMat gs(gout.data() + s * cout * grid, static_cast<Eigen::Index>(cout),
                   static_cast<Eigen::Index>(grid));
    if (need[1]) {
      im2col(x.data() + s * cin * h * wd, g, cols.data());
      MapMat dw(grads[1].data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(patch));
      dw.noalias() += gs * cols.transpose();
    }
    if (need[0]) {
      dcols.noalias() = wm.transpose() * gs;
      col2im(dcols.data(), g, grads[0].data() + s * cin * h * wd);
    }
    if (in.size() == 3 && need[2]) {
      for (std::size_t c = 0; c < cout; ++c) grads[2][c] += gs.row(static_cast<Eigen::Index>(c)).sum();
    }
  }
  return grads;
}

std::vector<Tensor> conv_transpose2d_backward(std::span<const Tensor* const> in, const Tensor& gout,
                                              const OpAttrs& a, std::span<const bool> need) {
  const Tensor& x = *in[0];
  const Tensor& w = *in[1];
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  const std::size_t oh = gout.dim(2), ow = gout.dim(3);
  const ConvGeometry g{cout, oh, ow, k, a.stride, a.padding, h, wd};
  const std::size_t grid = h * wd, patch = cout * k * k;
  std::vector<Tensor> grads(in.size());
  if (need[0]) grads[0] = Tensor(x.shape());
  if (need[1]) grads[1] = Tensor(w.shape());
  if (in.size() == 3 && need[2]) grads[2] = Tensor(in[2]->shape());
  RowMat gcols(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(grid));
  ConstMapMat wm(w.data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(patch));
  for (std::size_t s = 0; s < n; ++s) {
    const double* gs = gout.data() + s * cout * oh * ow;
    im2col(gs, g, gcols.data());
    if (need[0]) {
      MapMat dx(grads[0].data() + s * cin * grid, static_cast<Eigen::Index>(cin),
                static_cast<Eigen::Index>(grid));
      dx.noalias() = wm * gcols;
    }
    if (need[1]) {
      ConstMapMat xs(x.data() + s * cin * grid, static_cast<Eigen::Index>(cin),
                     static_cast<Eigen::Index>(grid));
      MapMat dw(grads[1].data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(patch));
      dw.noalias() += xs * gcols.transpose();
    }
    if (in.size() == 3 && need[2]) {
      for (std::size_t c = 0; c < cout; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += gs[c * oh * ow + i];
        grads[2][c] += acc;
      }
    }
  }
  return grads;
}

void validate(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::Leaf:
      shape_error(kind, "leaf nodes are created with constant/input/parameter");
    case OpKind::MatMul: {
      expect_arity(kind, in.size(), 2, 2);
      expect_rank(kind, *in[0], 2, "left operand");
      expect_rank(kind, *in[1], 2, "right operand");
      if (in[0]->dim(1) != in[1]->dim(0)) {
        shape_error(kind, "inner dimensions differ: " + shape_string(in[0]->shape()) + " x " +
                              shape_string(in[1]->shape()));
      }
      return;
    }
    case OpKind::Add:
    case OpKind::Subtract:
      expect_arity(kind, in.size(), 2, 2);
      if (in[0]->shape() != in[1]->shape() && !is_row_broadcast(*in[0], *in[1])) {
        shape_error(kind, "shapes " + shape_string(in[0]->shape()) + " and " +
                              shape_string(in[1]->shape()) + " do not conform");
      }
      return;
    case OpKind::Multiply:
      expect_arity(kind, in.size(), 2, 2);
      if (in[0]->shape() != in[1]->shape()) {
        shape_error(kind, "shapes " + shape_string(in[0]->shape()) + " and " +
                              shape_string(in[1]->shape()) + " differ");
      }
      return;
    case OpKind::SoftmaxRows:
    case OpKind::L2NormalizeRows:
    case OpKind::Transpose:
      expect_arity(kind, in.size(), 1, 1);
      expect_rank(kind, *in[0], 2, "input");
      return;
    case OpKind::Conv2d:
    case OpKind::ConvTranspose2d:
      check_conv_inputs(kind, in, attrs);
      return;
    case OpKind::Reshape:
      expect_arity(kind, in.size(), 1, 1);
      if (numel(attrs.shape) != in[0]->size()) {
        shape_error(kind, "cannot reshape " + shape_string(in[0]->shape()) + " to " +
                              shape_string(attrs.shape));
      }
      return;
    case OpKind::Log:
      expect_arity(kind, in.size(), 1, 1);
      if (attrs.log_floor <= 0.0) {
        for (double v : in[0]->values()) {
          if (!(v > 0.0)) shape_error(kind, "non-positive input without a floor");
        }
      }
      return;
    case OpKind::Relu:
    case OpKind::Sum:
    case OpKind::Mean:
    case OpKind::FrobeniusNormSquared:
    case OpKind::ScalarMultiply:
    case OpKind::Abs:
      expect_arity(kind, in.size(), 1, 1);
      return;
  }
  shape_error(kind, "unknown op kind");
}

std::vector<Tensor> backward_op(OpKind kind, std::span<const Tensor* const> in, const Tensor& out,
                                const Tensor& g, const OpAttrs& attrs, std::span<const bool> need) {
  std::vector<Tensor> grads(in.size());
  switch (kind) {
    case OpKind::Leaf:
      break;
    case OpKind::MatMul: {
      if (need[0]) {
        grads[0] = Tensor(in[0]->shape());
        as_matrix(grads[0]).noalias() = as_matrix(g) * as_matrix(*in[1]).transpose();
      }
      if (need[1]) {
        grads[1] = Tensor(in[1]->shape());
        as_matrix(grads[1]).noalias() = as_matrix(*in[0]).transpose() * as_matrix(g);
      }
      break;
    }
    case OpKind::Add:
    case OpKind::Subtract: {
      const double sign = kind == OpKind::Add ? 1.0 : -1.0;
      if (need[0]) grads[0] = g;
      if (need[1]) {
        grads[1] = Tensor(in[1]->shape());
        if (in[1]->shape() == g.shape()) {
          for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] = sign * g[i];
        } else {
          const std::size_t m = g.dim(1);
          for (std::size_t i = 0; i < g.size(); ++i) grads[1][i % m] += sign * g[i];
        }
      }
      break;
    }
    case OpKind::Multiply: {
      if (need[0]) {
        grads[0] = Tensor(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] = g[i] * (*in[1])[i];
      }
      if (need[1]) {
        grads[1] = Tensor(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] = g[i] * (*in[0])[i];
      }
      break;
    }
    case OpKind::Relu: {
      grads[0] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] = (*in[0])[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case OpKind::SoftmaxRows: {
      grads[0] = Tensor(g.shape());
      const std::size_t rows = g.dim(0), cols = g.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * out.at(r, c);
        for (std::size_t c = 0; c < cols; ++c) grads[0].at(r, c) = out.at(r, c) * (g.at(r, c) - dot);
      }
      break;
    }
    case OpKind::L2NormalizeRows: {
      // y = x / max(|x|, guard); above the guard dy/dx = I/|x| - x x^T / |x|^3, below it I/guard
      grads[0] = Tensor(g.shape());
      const Tensor& x = *in[0];
      const std::size_t rows = g.dim(0), cols = g.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0, xg = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          sq += x.at(r, c) * x.at(r, c);
          xg += x.at(r, c) * g.at(r, c);
        }
        const double norm = std::sqrt(sq), s = std::max(norm, kNormGuard);
        const double coef = norm > kNormGuard ? xg / (norm * norm * norm) : 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          grads[0].at(r, c) = g.at(r, c) / s - coef * x.at(r, c);
        }
      }
      break;
    }
    case OpKind::Conv2d:
      return conv2d_backward(in, g, attrs, need);
    case OpKind::ConvTranspose2d:
      return conv_transpose2d_backward(in, g, attrs, need);
    case OpKind::Reshape:
      grads[0] = g.reshaped(in[0]->shape());
      break;
    case OpKind::Sum:
      grads[0] = Tensor(in[0]->shape(), g.item());
      break;
    case OpKind::Mean:
      grads[0] = Tensor(in[0]->shape(), g.item() / static_cast<double>(in[0]->size()));
      break;
    case OpKind::FrobeniusNormSquared: {
      grads[0] = Tensor(in[0]->shape());
      const double s = 2.0 * g.item();
      for (std::size_t i = 0; i < grads[0].size(); ++i) grads[0][i] = s * (*in[0])[i];
      break;
    }
    case OpKind::Log: {
      grads[0] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = (*in[0])[i];
        grads[0][i] = x > attrs.log_floor ? g[i] / x : 0.0;
      }
      break;
    }
    case OpKind::ScalarMultiply: {
      grads[0] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] = attrs.scalar * g[i];
      break;
    }
    case OpKind::Transpose:
      grads[0] = transpose2d(g);
      break;
    case OpKind::Abs: {
      grads[0] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = (*in[0])[i];
        grads[0][i] = x > 0.0 ? g[i] : (x < 0.0 ? -g[i] : 0.0);
      }
      break;
    }
  }
  return grads;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view to_string(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OpKind> op_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::size_t conv_output_size(std::size_t size, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  return (size + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t size, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding) {
  return (size - 1) * stride + kernel + output_padding - 2 * padding;
}

Tensor forward_op(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  validate(kind, in, attrs);
  switch (kind) {
    case OpKind::Leaf:
      break;
    case OpKind::MatMul: {
      Tensor out({in[0]->dim(0), in[1]->dim(1)});
      as_matrix(out).noalias() = as_matrix(*in[0]) * as_matrix(*in[1]);
      return out;
    }
    case OpKind::Add:
    case OpKind::Subtract: {
      const double sign = kind == OpKind::Add ? 1.0 : -1.0;
      Tensor out = *in[0];
      const Tensor& b = *in[1];
      if (b.shape() == out.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * b[i];
      } else {
        const std::size_t m = out.dim(1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * b[i % m];
      }
      return out;
    }
    case OpKind::Multiply: {
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*in[1])[i];
      return out;
    }
    case OpKind::Relu: {
      Tensor out = *in[0];
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::SoftmaxRows: {
      Tensor out = *in[0];
      const std::size_t rows = out.dim(0), cols = out.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        double mx = out.at(r, 0);
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, out.at(r, c));
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          out.at(r, c) = std::exp(out.at(r, c) - mx);
          total += out.at(r, c);
        }
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= total;
      }
      return out;
    }
    case OpKind::L2NormalizeRows: {
      Tensor out = *in[0];
      const std::size_t rows = out.dim(0), cols = out.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sq += out.at(r, c) * out.at(r, c);
        const double s = std::max(std::sqrt(sq), kNormGuard);
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= s;
      }
      return out;
    }
    case OpKind::Conv2d:
      return conv2d_forward(in, attrs);
    case OpKind::ConvTranspose2d:
      return conv_transpose2d_forward(in, attrs);
    case OpKind::Reshape:
      return in[0]->reshaped(attrs.shape);
    case OpKind::Sum: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s);
    }
    case OpKind::Mean: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s / static_cast<double>(in[0]->size()));
    }
    case OpKind::FrobeniusNormSquared: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v * v;
      return Tensor::scalar(s);
    }
    case OpKind::Log: {
      Tensor out = *in[0];
      for (auto& v : out.values()) v = std::log(std::max(v, attrs.log_floor));
      return out;
    }
    case OpKind::ScalarMultiply: {
      Tensor out = *in[0];
      for (auto& v : out.values()) v *= attrs.scalar;
      return out;
    }
    case OpKind::Transpose:
      return transpose2d(*in[0]);
    case OpKind::Abs: {
      Tensor out = *in[0];
      for (auto& v : out.values()) v = std::abs(v);
      return out;
    }
  }
  shape_error(kind, "unknown op kind");
}

// ---------------------------------------------------------------------------

Parameter::Parameter(std::string name, Tensor value, bool requires_grad)
    : name_(std::move(name)),
      value_(std::move(value)),
      grad_(value_.shape()),
      requires_grad_(requires_grad) {}

Parameter& ParameterStore::add(std::string name, Tensor value, bool requires_grad) {
  if (find(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  return params_.emplace_back(std::move(name), std::move(value), requires_grad);
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name() == name) return &p;
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name() == name) return &p;
  }
  return nullptr;
}

Parameter& ParameterStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

bool ParameterStore::remove(std::string_view name) {
  for (auto it = params_.begin(); it != params_.end(); ++it) {
    if (it->name() == name) {
      params_.erase(it);
      return true;
    }
  }
  return false;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.name().starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return graph->value(*this); }
const Tensor& Var::grad() const { return graph->grad(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw ValidationError("variable does not belong to this graph");
  return nodes_[v.id];
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.value = p.value();
  n.param = &p;
  n.requires_grad = p.requires_grad();
  return push(std::move(n));
}

Var Graph::apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  std::vector<const Tensor*> values;
  Node n;
  n.kind = kind;
  n.attrs = attrs;
  for (const Var& v : inputs) {
    const Node& in = node(v);
    values.push_back(&in.value);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  n.value = forward_op(kind, values, attrs);
  return push(std::move(n));
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ValidationError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  backward_order_.clear();
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[loss.id].grad = Tensor(root.value.shape(), 1.0);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    backward_order_.push_back(id);
    if (n.kind == OpKind::Leaf) {
      if (n.param) accumulate(n.param->grad(), n.grad);
      continue;
    }
    std::vector<const Tensor*> in;
    auto need = std::make_unique<bool[]>(n.inputs.size());
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      in.push_back(&nodes_[n.inputs[i]].value);
      need[i] = nodes_[n.inputs[i]].requires_grad;
    }
    auto grads = backward_op(n.kind, in, n.value, n.grad, n.attrs,
                             std::span<const bool>(need.get(), n.inputs.size()));
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      if (need[i] && !grads[i].empty()) accumulate(nodes_[n.inputs[i]].grad, grads[i]);
    }
  }
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
const Tensor& Graph::grad(Var v) const { return node(v).grad; }
OpKind Graph::kind(Var v) const { return node(v).kind; }
std::span<const std::size_t> Graph::inputs_of(Var v) const { return node(v).inputs; }

// ---------------------------------------------------------------------------

namespace {
Var apply1(OpKind kind, Var x, const OpAttrs& attrs = {}) {
  const std::array<Var, 1> in{x};
  return x.graph->apply(kind, in, attrs);
}
Var apply2(OpKind kind, Var a, Var b) {
  const std::array<Var, 2> in{a, b};
  return a.graph->apply(kind, in);
}
Var apply_conv(OpKind kind, Var x, Var w, std::optional<Var> bias, const OpAttrs& attrs) {
  if (bias) {
    const std::array<Var, 3> in{x, w, *bias};
    return x.graph->apply(kind, in, attrs);
  }
  const std::array<Var, 2> in{x, w};
  return x.graph->apply(kind, in, attrs);
}
}  // namespace

Var matmul(Var a, Var b) { return apply2(OpKind::MatMul, a, b); }
Var add(Var a, Var b) { return apply2(OpKind::Add, a, b); }
Var subtract(Var a, Var b) { return apply2(OpKind::Subtract, a, b); }
Var multiply(Var a, Var b) { return apply2(OpKind::Multiply, a, b); }
Var relu(Var x) { return apply1(OpKind::Relu, x); }
Var softmax_rows(Var x) { return apply1(OpKind::SoftmaxRows, x); }
Var l2_normalize_rows(Var x) { return apply1(OpKind::L2NormalizeRows, x); }

Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t padding) {
  OpAttrs a;
  a.stride = stride;
  a.padding = padding;
  return apply_conv(OpKind::Conv2d, x, weight, bias, a);
}

Var conv_transpose2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride,
                     std::size_t padding, std::size_t output_padding) {
  OpAttrs a;
  a.stride = stride;
  a.padding = padding;
  a.output_padding = output_padding;
  return apply_conv(OpKind::ConvTranspose2d, x, weight, bias, a);
}

Var reshape(Var x, Shape shape) {
  OpAttrs a;
  a.shape = std::move(shape);
  return apply1(OpKind::Reshape, x, a);
}

Var sum(Var x) { return apply1(OpKind::Sum, x); }
Var mean(Var x) { return apply1(OpKind::Mean, x); }
Var frobenius_norm_squared(Var x) { return apply1(OpKind::FrobeniusNormSquared, x); }

Var log(Var x, double floor) {
  OpAttrs a;
  a.log_floor = floor;
  return apply1(OpKind::Log, x, a);
}

Var scale(Var x, double factor) {
  OpAttrs a;
  a.scalar = factor;
  return apply1(OpKind::ScalarMultiply, x, a);
}

Var transpose(Var x) { return apply1(OpKind::Transpose, x); }
Var abs(Var x) { return apply1(OpKind::Abs, x); }

double grad_check(const LossBuilder& build, Parameter& param, double eps) {
  if (!(eps > 0.0)) throw ValidationError("grad_check eps must be positive");
  Tensor analytic;
  {
    Graph g;
    Var loss = build(g);
    param.zero_grad();
    g.backward(loss);
    analytic = param.grad();
  }
  auto eval = [&] {
    Graph g;
    return build(g).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < param.value().size(); ++i) {
    const double saved = param.value()[i];
    param.value()[i] = saved + eps;
    const double plus = eval();
    param.value()[i] = saved - eps;
    const double minus = eval();
    param.value()[i] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ncsc::ad
