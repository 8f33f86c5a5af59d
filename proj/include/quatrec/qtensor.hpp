#ifndef QUATREC_QTENSOR_HPP_
#define QUATREC_QTENSOR_HPP_

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "quatrec/error.hpp"
#include "quatrec/quaternion.hpp"

namespace quatrec {

// Layout used everywhere in the library: a quaternion block with n entries per
// part is 4n reals laid out as [r(0..n) | a(0..n) | b(0..n) | c(0..n)]. For a
// vector of quaternion size d that is exactly the concatenation [r, a, b, c]
// of length d. Matrices store each part row-major.

namespace kernels {

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

/// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) noexcept {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double dot(std::span<const double> x, std::span<const double> y) noexcept {
  double s = 0;
  for (std::size_t e = 0; e < x.size(); ++e) s += x[e] * y[e];
  return s;
}

/// Element-wise Hamilton product of two blocks of n quaternions each.
inline void hamilton(std::span<const double> x, std::span<const double> y,
                     std::span<double> out) noexcept {
  const std::size_t n = x.size() / kParts;
  const double *xr = x.data(), *xa = xr + n, *xb = xa + n, *xc = xb + n;
  const double *yr = y.data(), *ya = yr + n, *yb = ya + n, *yc = yb + n;
  double *zr = out.data(), *za = zr + n, *zb = za + n, *zc = zb + n;
  for (std::size_t e = 0; e < n; ++e) {
    const double r = xr[e] * yr[e] - xa[e] * ya[e] - xb[e] * yb[e] - xc[e] * yc[e];
    const double a = xr[e] * ya[e] + xa[e] * yr[e] + xb[e] * yc[e] - xc[e] * yb[e];
    const double b = xr[e] * yb[e] - xa[e] * yc[e] + xb[e] * yr[e] + xc[e] * ya[e];
    const double c = xr[e] * yc[e] + xa[e] * yb[e] - xb[e] * ya[e] + xc[e] * yr[e];
    zr[e] = r;
    za[e] = a;
    zb[e] = b;
    zc[e] = c;
  }
}

/// Hamilton product summed over the n entries of each part, giving one
/// quaternion: dot products take the place of scalar products.
inline Quat hamilton_inner(std::span<const double> x, std::span<const double> y) noexcept {
  const std::size_t n = x.size() / kParts;
  const double *xr = x.data(), *xa = xr + n, *xb = xa + n, *xc = xb + n;
  const double *yr = y.data(), *ya = yr + n, *yb = ya + n, *yc = yb + n;
  Quat q;
  for (std::size_t e = 0; e < n; ++e) {
    q.r += xr[e] * yr[e] - xa[e] * ya[e] - xb[e] * yb[e] - xc[e] * yc[e];
    q.a += xr[e] * ya[e] + xa[e] * yr[e] + xb[e] * yc[e] - xc[e] * yb[e];
    q.b += xr[e] * yb[e] - xa[e] * yc[e] + xb[e] * yr[e] + xc[e] * ya[e];
    q.c += xr[e] * yc[e] + xa[e] * yb[e] - xb[e] * ya[e] + xc[e] * yr[e];
  }
  return q;
}

/// Quaternion linear map out = W (x) x, W a [rows x cols] quaternion matrix
/// and x a quaternion vector of cols entries per part.
inline void hamilton_matvec(std::span<const double> w, std::span<const double> x,
                            std::span<double> out, std::size_t rows,
                            std::size_t cols) noexcept {
  const std::size_t wn = rows * cols;
  const double *wr = w.data(), *wa = wr + wn, *wb = wa + wn, *wc = wb + wn;
  const double *xr = x.data(), *xa = xr + cols, *xb = xa + cols, *xc = xb + cols;
  double *zr = out.data(), *za = zr + rows, *zb = za + rows, *zc = zb + rows;
  for (std::size_t o = 0; o < rows; ++o) {
    double r = 0, a = 0, b = 0, c = 0;
    const std::size_t base = o * cols;
    for (std::size_t i = 0; i < cols; ++i) {
      const double w0 = wr[base + i], w1 = wa[base + i], w2 = wb[base + i], w3 = wc[base + i];
      r += w0 * xr[i] - w1 * xa[i] - w2 * xb[i] - w3 * xc[i];
      a += w0 * xa[i] + w1 * xr[i] + w2 * xc[i] - w3 * xb[i];
      b += w0 * xb[i] - w1 * xc[i] + w2 * xr[i] + w3 * xa[i];
      c += w0 * xc[i] + w1 * xb[i] - w2 * xa[i] + w3 * xr[i];
    }
    zr[o] = r;
    za[o] = a;
    zb[o] = b;
    zc[o] = c;
  }
}

/// Accumulates the gradients of hamilton_matvec into gw and gx given the
/// output gradient g. Either target may be empty to skip it.
inline void hamilton_matvec_backward(std::span<const double> w, std::span<const double> x,
                                     std::span<const double> g, std::span<double> gw,
                                     std::span<double> gx, std::size_t rows,
                                     std::size_t cols) noexcept {
  const std::size_t wn = rows * cols;
  const double *wr = w.data(), *wa = wr + wn, *wb = wa + wn, *wc = wb + wn;
  const double *xr = x.data(), *xa = xr + cols, *xb = xa + cols, *xc = xb + cols;
  const double *gr = g.data(), *ga = gr + rows, *gb = ga + rows, *gc = gb + rows;
  for (std::size_t o = 0; o < rows; ++o) {
    const std::size_t base = o * cols;
    if (!gw.empty()) {
      double *dr = gw.data(), *da = dr + wn, *db = da + wn, *dc = db + wn;
      for (std::size_t i = 0; i < cols; ++i) {
        dr[base + i] += gr[o] * xr[i] + ga[o] * xa[i] + gb[o] * xb[i] + gc[o] * xc[i];
        da[base + i] += -gr[o] * xa[i] + ga[o] * xr[i] - gb[o] * xc[i] + gc[o] * xb[i];
        db[base + i] += -gr[o] * xb[i] + ga[o] * xc[i] + gb[o] * xr[i] - gc[o] * xa[i];
        dc[base + i] += -gr[o] * xc[i] - ga[o] * xb[i] + gb[o] * xa[i] + gc[o] * xr[i];
      }
    }
    if (!gx.empty()) {
      double *dr = gx.data(), *da = dr + cols, *db = da + cols, *dc = db + cols;
      for (std::size_t i = 0; i < cols; ++i) {
        const double w0 = wr[base + i], w1 = wa[base + i], w2 = wb[base + i], w3 = wc[base + i];
        dr[i] += w0 * gr[o] + w1 * ga[o] + w2 * gb[o] + w3 * gc[o];
        da[i] += -w1 * gr[o] + w0 * ga[o] + w3 * gb[o] - w2 * gc[o];
        db[i] += -w2 * gr[o] - w3 * ga[o] + w0 * gb[o] + w1 * gc[o];
        dc[i] += -w3 * gr[o] + w2 * ga[o] - w1 * gb[o] + w0 * gc[o];
      }
    }
  }
}

/// Per-part inner products, one quaternion of four scalars.
inline Quat component_dot(std::span<const double> x, std::span<const double> y) noexcept {
  const std::size_t n = x.size() / kParts;
  Quat q;
  for (std::size_t p = 0; p < kParts; ++p) {
    double s = 0;
    for (std::size_t e = 0; e < n; ++e) s += x[p * n + e] * y[p * n + e];
    q[p] = s;
  }
  return q;
}

inline double average_component_dot(std::span<const double> x,
                                    std::span<const double> y) noexcept {
  return component_dot(x, y).mean();
}

/// Masked softmax over `positions` rows of a [positions x 4] logit block,
/// each of the four columns normalized independently. Masked rows get 0.
/// Returns false when every row is masked.
inline bool softmax_positions(std::span<const double> logits, std::span<const std::uint8_t> mask,
                              std::span<double> out) noexcept {
  const std::size_t positions = logits.size() / kParts;
  auto valid = [&](std::size_t p) { return mask.empty() || mask[p]; };
  bool any = false;
  for (std::size_t p = 0; p < positions; ++p) any = any || valid(p);
  if (!any) return false;
  for (std::size_t part = 0; part < kParts; ++part) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < positions; ++p)
      if (valid(p)) hi = std::max(hi, logits[p * kParts + part]);
    double total = 0;
    for (std::size_t p = 0; p < positions; ++p) {
      const std::size_t at = p * kParts + part;
      out[at] = valid(p) ? std::exp(logits[at] - hi) : 0.0;
      total += out[at];
    }
    for (std::size_t p = 0; p < positions; ++p) out[p * kParts + part] /= total;
  }
  return true;
}

}  // namespace kernels

/// A quaternion vector or matrix: four real parts of identical shape
/// [rows x cols], stored structure-of-arrays in one buffer.
class QTensor {
 public:
  QTensor() = default;

  /// Zero tensor with `cols` entries per part (a vector of quaternion size 4*cols).
  explicit QTensor(std::size_t cols) : QTensor(1, cols) {}
  QTensor(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(kParts * rows * cols, 0.0) {}

  /// Builds a vector from its four parts.
  static QTensor from_parts(std::span<const double> r, std::span<const double> a,
                            std::span<const double> b, std::span<const double> c) {
    if (a.size() != r.size() || b.size() != r.size() || c.size() != r.size())
      throw DimensionError("QTensor::from_parts: parts differ in length");
    QTensor t(r.size());
    std::copy(r.begin(), r.end(), t.part(Part::r).begin());
    std::copy(a.begin(), a.end(), t.part(Part::a).begin());
    std::copy(b.begin(), b.end(), t.part(Part::b).begin());
    std::copy(c.begin(), c.end(), t.part(Part::c).begin());
    return t;
  }

  /// Inverse of concat_components: splits a real vector of length d into
  /// four parts of d/4.
  static QTensor from_concat(std::span<const double> flat) {
    if (flat.size() % kParts != 0)
      throw DimensionError("QTensor::from_concat: length " + std::to_string(flat.size()) +
                           " is not divisible by 4");
    QTensor t(flat.size() / kParts);
    std::copy(flat.begin(), flat.end(), t.data_.begin());
    return t;
  }

  static QTensor scalar(const Quat& q) {
    QTensor t(1);
    for (std::size_t p = 0; p < kParts; ++p) t.data_[p] = q[p];
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  /// Entries per part.
  std::size_t part_size() const noexcept { return rows_ * cols_; }
  /// Total real count; the quaternion size d for a vector.
  std::size_t size() const noexcept { return data_.size(); }
  bool is_vector() const noexcept { return rows_ == 1; }

  std::span<double> part(Part p) noexcept {
    return {data_.data() + static_cast<std::size_t>(p) * part_size(), part_size()};
  }
  std::span<const double> part(Part p) const noexcept {
    return {data_.data() + static_cast<std::size_t>(p) * part_size(), part_size()};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  /// Quaternion stored at entry e of every part.
  Quat at(std::size_t e) const noexcept {
    const std::size_t n = part_size();
    return {data_[e], data_[n + e], data_[2 * n + e], data_[3 * n + e]};
  }
  void set(std::size_t e, const Quat& q) noexcept {
    const std::size_t n = part_size();
    data_[e] = q.r;
    data_[n + e] = q.a;
    data_[2 * n + e] = q.b;
    data_[3 * n + e] = q.c;
  }

  std::string shape_string() const {
    return "[4 x " + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const QTensor&, const QTensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
inline void require_same_shape(const QTensor& x, const QTensor& y, const char* op) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + x.shape_string() + " vs " +
                         y.shape_string());
}
}  // namespace detail

/// Hamilton product of two quaternion tensors of identical shape, entry by entry.
inline QTensor hamilton_product(const QTensor& x, const QTensor& y) {
  detail::require_same_shape(x, y, "hamilton_product");
  QTensor out(x.rows(), x.cols());
  kernels::hamilton(x.flat(), y.flat(), out.flat());
  return out;
}

/// Quaternion linear map W (x) x with W of shape [rows x cols] and x a vector
/// of cols entries per part.
inline QTensor hamilton_linear(const QTensor& w, const QTensor& x) {
  if (!x.is_vector() || x.cols() != w.cols())
    throw DimensionError("hamilton_linear: weight " + w.shape_string() +
                         " cannot map input " + x.shape_string());
  QTensor out(w.rows());
  kernels::hamilton_matvec(w.flat(), x.flat(), out.flat(), w.rows(), w.cols());
  return out;
}

/// Applies a real binary operator part by part: f(r_x, r_y), f(a_x, a_y), ...
/// `f` receives the two part spans and returns that part's result.
template <class F>
auto component_wise(F&& f, const QTensor& x, const QTensor& y) {
  using R = std::invoke_result_t<F&, std::span<const double>, std::span<const double>>;
  std::array<R, kParts> parts;
  for (std::size_t p = 0; p < kParts; ++p)
    parts[p] = f(x.part(static_cast<Part>(p)), y.part(static_cast<Part>(p)));
  return parts;
}

namespace detail {
template <class Op>
QTensor elementwise(const QTensor& x, const QTensor& y, Op op, const char* name) {
  require_same_shape(x, y, name);
  QTensor out(x.rows(), x.cols());
  auto xs = x.flat();
  auto ys = y.flat();
  auto zs = out.flat();
  for (std::size_t e = 0; e < zs.size(); ++e) zs[e] = op(xs[e], ys[e]);
  return out;
}
}  // namespace detail

inline QTensor component_add(const QTensor& x, const QTensor& y) {
  return detail::elementwise(x, y, std::plus<>{}, "component_add");
}
inline QTensor component_sub(const QTensor& x, const QTensor& y) {
  return detail::elementwise(x, y, std::minus<>{}, "component_sub");
}
inline QTensor component_product(const QTensor& x, const QTensor& y) {
  return detail::elementwise(x, y, std::multiplies<>{}, "component_product");
}
inline QTensor component_scale(double s, const QTensor& x) {
  QTensor out = x;
  for (double& v : out.flat()) v *= s;
  return out;
}
/// Scales each part of x by the matching part of the scalar quaternion q.
inline QTensor component_scale(const Quat& q, const QTensor& x) {
  QTensor out = x;
  for (std::size_t p = 0; p < kParts; ++p)
    for (double& v : out.part(static_cast<Part>(p))) v *= q[p];
  return out;
}

inline Quat component_dot(const QTensor& x, const QTensor& y) {
  detail::require_same_shape(x, y, "component_dot");
  return kernels::component_dot(x.flat(), y.flat());
}

/// Mean of the four per-part inner products.
inline double average_component_dot(const QTensor& x, const QTensor& y) {
  detail::require_same_shape(x, y, "average_component_dot");
  return kernels::average_component_dot(x.flat(), y.flat());
}

/// Part-wise concatenation of two vectors: [r_x r_y | a_x a_y | b_x b_y | c_x c_y].
inline QTensor component_concat(const QTensor& x, const QTensor& y) {
  if (!x.is_vector() || !y.is_vector())
    throw DimensionError("component_concat: expects vectors, got " + x.shape_string() +
                         " and " + y.shape_string());
  QTensor out(x.cols() + y.cols());
  for (std::size_t p = 0; p < kParts; ++p) {
    auto dst = out.part(static_cast<Part>(p));
    auto xs = x.part(static_cast<Part>(p));
    auto ys = y.part(static_cast<Part>(p));
    std::copy(xs.begin(), xs.end(), dst.begin());
    std::copy(ys.begin(), ys.end(), dst.begin() + static_cast<std::ptrdiff_t>(xs.size()));
  }
  return out;
}

enum class Activation { kSigmoid, kTanh };

/// Applies a real activation to every entry of every part independently.
inline QTensor split_activation(Activation alpha, const QTensor& x) {
  QTensor out = x;
  for (double& v : out.flat()) v = alpha == Activation::kSigmoid ? kernels::sigmoid(v) : std::tanh(v);
  return out;
}

/// [r, a, b, c] as one real vector of length d.
inline std::vector<double> concat_components(const QTensor& x) {
  return {x.flat().begin(), x.flat().end()};
}

/// Real parameter count of a Hamilton linear map from quaternion size d_in to d_out.
constexpr std::size_t hamilton_linear_parameter_count(std::size_t d_in, std::size_t d_out) noexcept {
  return kParts * (d_in / kParts) * (d_out / kParts);
}

}  // namespace quatrec

#endif  // QUATREC_QTENSOR_HPP_
