#ifndef QUATREC_QUATERNION_HPP_
#define QUATREC_QUATERNION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "quatrec/error.hpp"

namespace quatrec {

/// The four parts of a quaternion r + a i + b j + c k, in storage order.
enum class Part : std::size_t { r = 0, a = 1, b = 2, c = 3 };

inline constexpr std::size_t kParts = 4;

/// A quaternion number with real coefficients.
template <class T>
struct Quaternion {
  T r{};
  T a{};
  T b{};
  T c{};

  constexpr T& operator[](std::size_t p) noexcept {
    return p == 0 ? r : p == 1 ? a : p == 2 ? b : c;
  }
  constexpr const T& operator[](std::size_t p) const noexcept {
    return p == 0 ? r : p == 1 ? a : p == 2 ? b : c;
  }

  static constexpr Quaternion identity() noexcept { return {T(1), T(0), T(0), T(0)}; }
  static constexpr Quaternion i() noexcept { return {T(0), T(1), T(0), T(0)}; }
  static constexpr Quaternion j() noexcept { return {T(0), T(0), T(1), T(0)}; }
  static constexpr Quaternion k() noexcept { return {T(0), T(0), T(0), T(1)}; }

  constexpr Quaternion conj() const noexcept { return {r, -a, -b, -c}; }

  T norm() const noexcept {
    using std::sqrt;
    return sqrt(r * r + a * a + b * b + c * c);
  }

  /// Average of the four coefficients.
  constexpr T mean() const noexcept { return (r + a + b + c) / T(4); }

  bool is_finite() const noexcept {
    using std::isfinite;
    return isfinite(r) && isfinite(a) && isfinite(b) && isfinite(c);
  }

  friend constexpr bool operator==(const Quaternion&, const Quaternion&) = default;
};

using Quat = Quaternion<double>;

/// Hamilton product. Not commutative: hamilton(i, j) = k, hamilton(j, i) = -k.
template <class T>
constexpr Quaternion<T> hamilton(const Quaternion<T>& x, const Quaternion<T>& y) noexcept {
  return {x.r * y.r - x.a * y.a - x.b * y.b - x.c * y.c,
          x.r * y.a + x.a * y.r + x.b * y.c - x.c * y.b,
          x.r * y.b - x.a * y.c + x.b * y.r + x.c * y.a,
          x.r * y.c + x.a * y.b - x.b * y.a + x.c * y.r};
}

// Component-wise arithmetic.
template <class T>
constexpr Quaternion<T> operator+(const Quaternion<T>& x, const Quaternion<T>& y) noexcept {
  return {x.r + y.r, x.a + y.a, x.b + y.b, x.c + y.c};
}
template <class T>
constexpr Quaternion<T> operator-(const Quaternion<T>& x, const Quaternion<T>& y) noexcept {
  return {x.r - y.r, x.a - y.a, x.b - y.b, x.c - y.c};
}
template <class T>
constexpr Quaternion<T> operator-(const Quaternion<T>& x) noexcept {
  return {-x.r, -x.a, -x.b, -x.c};
}
template <class T>
constexpr Quaternion<T> component_product(const Quaternion<T>& x,
                                          const Quaternion<T>& y) noexcept {
  return {x.r * y.r, x.a * y.a, x.b * y.b, x.c * y.c};
}
template <class T>
constexpr Quaternion<T> operator*(T s, const Quaternion<T>& x) noexcept {
  return {s * x.r, s * x.a, s * x.b, s * x.c};
}

/// Softmax over positions, run separately for each of the four parts.
///
/// Positions with mask[p] == false get exactly zero in every part. An empty
/// mask means "all valid". Throws EmptyHistoryError when nothing is unmasked.
template <class T>
std::vector<Quaternion<T>> component_softmax(std::span<const Quaternion<T>> xs,
                                             std::span<const std::uint8_t> mask = {}) {
  if (!mask.empty() && mask.size() != xs.size()) {
    throw DimensionError("component_softmax: mask has " + std::to_string(mask.size()) +
                         " entries for " + std::to_string(xs.size()) + " positions");
  }
  auto valid = [&](std::size_t p) { return mask.empty() || mask[p]; };
  std::size_t n_valid = 0;
  for (std::size_t p = 0; p < xs.size(); ++p) n_valid += valid(p) ? 1 : 0;
  if (n_valid == 0) throw EmptyHistoryError("component_softmax: every position is masked");

  std::vector<Quaternion<T>> out(xs.size());
  for (std::size_t part = 0; part < kParts; ++part) {
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t p = 0; p < xs.size(); ++p)
      if (valid(p)) hi = std::max(hi, xs[p][part]);
    T total = 0;
    for (std::size_t p = 0; p < xs.size(); ++p) {
      if (!valid(p)) continue;
      out[p][part] = std::exp(xs[p][part] - hi);
      total += out[p][part];
    }
    for (std::size_t p = 0; p < xs.size(); ++p)
      if (valid(p)) out[p][part] /= total;
  }
  return out;
}

}  // namespace quatrec

#endif  // QUATREC_QUATERNION_HPP_
