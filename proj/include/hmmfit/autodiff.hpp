#pragma once

// Forward-mode automatic differentiation.
//
// Dual<N> carries a value and N first partials; Dual2<N> additionally carries
// the packed upper triangle of the N x N matrix of second partials. N is a
// compile-time width; gradient()/hessian()/jacobian() pick the smallest
// supported width >= the runtime parameter count and seed the unused slots
// with zero, so no heap allocation happens inside arithmetic.
//
// Model code is written once as a template over the scalar type S and is
// instantiated with double, Dual<N> and Dual2<N>. Branching is allowed only on
// value_of(s).

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "hmmfit/error.hpp"

namespace hmmfit::ad {

template <int N>
struct Dual {
  double val = 0.0;
  std::array<double, N> grad{};

  Dual() = default;
  Dual(double v) : val(v) {}  // NOLINT: constants promote implicitly

  friend Dual operator+(const Dual& a, const Dual& b) {
    Dual r(a.val + b.val);
    for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] + b.grad[i];
    return r;
  }
  friend Dual operator+(const Dual& a, double b) {
    Dual r = a;
    r.val += b;
    return r;
  }
  friend Dual operator+(double a, const Dual& b) { return b + a; }

  friend Dual operator-(const Dual& a) {
    Dual r(-a.val);
    for (int i = 0; i < N; ++i) r.grad[i] = -a.grad[i];
    return r;
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    Dual r(a.val - b.val);
    for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] - b.grad[i];
    return r;
  }
  friend Dual operator-(const Dual& a, double b) {
    Dual r = a;
    r.val -= b;
    return r;
  }
  friend Dual operator-(double a, const Dual& b) {
    Dual r = -b;
    r.val += a;
    return r;
  }

  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.val * b.val);
    for (int i = 0; i < N; ++i) r.grad[i] = a.val * b.grad[i] + b.val * a.grad[i];
    return r;
  }
  friend Dual operator*(const Dual& a, double b) {
    Dual r(a.val * b);
    for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] * b;
    return r;
  }
  friend Dual operator*(double a, const Dual& b) { return b * a; }

  friend Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.val;
    const double q = a.val * inv;
    Dual r(q);
    for (int i = 0; i < N; ++i) r.grad[i] = (a.grad[i] - q * b.grad[i]) * inv;
    return r;
  }
  friend Dual operator/(const Dual& a, double b) { return a * (1.0 / b); }
  friend Dual operator/(double a, const Dual& b) {
    const double inv = 1.0 / b.val;
    Dual r(a * inv);
    const double scale = -a * inv * inv;
    for (int i = 0; i < N; ++i) r.grad[i] = scale * b.grad[i];
    return r;
  }

  Dual& operator+=(const Dual& b) { return *this = *this + b; }
  Dual& operator-=(const Dual& b) { return *this = *this - b; }
  Dual& operator*=(const Dual& b) { return *this = *this * b; }
  Dual& operator/=(const Dual& b) { return *this = *this / b; }

  // Applies a scalar function with derivative d1 at val.
  Dual chain(double f, double d1) const {
    Dual r(f);
    for (int i = 0; i < N; ++i) r.grad[i] = d1 * grad[i];
    return r;
  }
};

/// Second-order forward scalar. The Hessian is stored once as the packed
/// upper triangle (row-major), so symmetry holds by construction.
template <int N>
struct Dual2 {
  static constexpr int kPacked = N * (N + 1) / 2;

  double val = 0.0;
  std::array<double, N> grad{};
  std::array<double, kPacked> hess{};

  Dual2() = default;
  Dual2(double v) : val(v) {}  // NOLINT

  static constexpr int packed_index(int i, int j) {
    if (i > j) std::swap(i, j);
    return i * N - i * (i - 1) / 2 + (j - i);
  }

  friend Dual2 operator+(const Dual2& a, const Dual2& b) {
    Dual2 r(a.val + b.val);
    for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] + b.grad[i];
    for (int k = 0; k < kPacked; ++k) r.hess[k] = a.hess[k] + b.hess[k];
    return r;
  }
  friend Dual2 operator+(const Dual2& a, double b) {
    Dual2 r = a;
    r.val += b;
    return r;
  }
  friend Dual2 operator+(double a, const Dual2& b) { return b + a; }

  friend Dual2 operator-(const Dual2& a) {
    Dual2 r(-a.val);
    for (int i = 0; i < N; ++i) r.grad[i] = -a.grad[i];
    for (int k = 0; k < kPacked; ++k) r.hess[k] = -a.hess[k];
    return r;
  }
  friend Dual2 operator-(const Dual2& a, const Dual2& b) {
    Dual2 r(a.val - b.val);
    for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] - b.grad[i];
    for (int k = 0; k < kPacked; ++k) r.hess[k] = a.hess[k] - b.hess[k];
    return r;
  }
  friend Dual2 operator-(const Dual2& a, double b) {
    Dual2 r = a;
    r.val -= b;
    return r;
  }
  friend Dual2 operator-(double a, const Dual2& b) {
    Dual2 r = -b;
    r.val += a;
    return r;
  }

  friend Dual2 operator*(const Dual2& a, const Dual2& b) {
    Dual2 r(a.val * b.val);
    for (int i = 0; i < N; ++i) r.grad[i] = a.val * b.grad[i] + b.val * a.grad[i];
    int k = 0;
    for (int i = 0; i < N; ++i) {
      for (int j = i; j < N; ++j, ++k) {
        r.hess[k] = a.val * b.hess[k] + b.val * a.hess[k] + a.grad[i] * b.grad[j] +
                    a.grad[j] * b.grad[i];
      }
    }
    return r;
  }
  friend Dual2 operator*(const Dual2& a, double b) {
    Dual2 r(a.val * b);
    for (int i = 0; i < N; ++i) r.grad[i] = a.grad[i] * b;
    for (int k = 0; k < kPacked; ++k) r.hess[k] = a.hess[k] * b;
    return r;
  }
  friend Dual2 operator*(double a, const Dual2& b) { return b * a; }

  friend Dual2 operator/(const Dual2& a, const Dual2& b) {
    const double inv = 1.0 / b.val;
    return a * b.chain(inv, -inv * inv, 2.0 * inv * inv * inv);
  }
  friend Dual2 operator/(const Dual2& a, double b) { return a * (1.0 / b); }
  friend Dual2 operator/(double a, const Dual2& b) {
    const double inv = 1.0 / b.val;
    return b.chain(a * inv, -a * inv * inv, 2.0 * a * inv * inv * inv);
  }

  Dual2& operator+=(const Dual2& b) { return *this = *this + b; }
  Dual2& operator-=(const Dual2& b) { return *this = *this - b; }
  Dual2& operator*=(const Dual2& b) { return *this = *this * b; }
  Dual2& operator/=(const Dual2& b) { return *this = *this / b; }

  // f(val) with first and second derivatives d1, d2.
  Dual2 chain(double f, double d1, double d2) const {
    Dual2 r(f);
    for (int i = 0; i < N; ++i) r.grad[i] = d1 * grad[i];
    int k = 0;
    for (int i = 0; i < N; ++i) {
      for (int j = i; j < N; ++j, ++k) r.hess[k] = d1 * hess[k] + d2 * grad[i] * grad[j];
    }
    return r;
  }
};

template <class S>
struct is_ad : std::false_type {};
template <int N>
struct is_ad<Dual<N>> : std::true_type {};
template <int N>
struct is_ad<Dual2<N>> : std::true_type {};

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.val;
}
template <int N>
double value_of(const Dual2<N>& x) {
  return x.val;
}

// ---- elementary functions -------------------------------------------------

namespace detail {
inline void require_positive(double v, const char* fn) {
  if (!(v > 0.0)) {
    throw HmmError(ErrorCode::DomainError,
                   std::string(fn) + " evaluated at non-positive argument " + std::to_string(v));
  }
}
}  // namespace detail

template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.val);
  return a.chain(e, e);
}
template <int N>
Dual2<N> exp(const Dual2<N>& a) {
  const double e = std::exp(a.val);
  return a.chain(e, e, e);
}

template <int N>
Dual<N> log(const Dual<N>& a) {
  detail::require_positive(a.val, "log");
  return a.chain(std::log(a.val), 1.0 / a.val);
}
template <int N>
Dual2<N> log(const Dual2<N>& a) {
  detail::require_positive(a.val, "log");
  const double inv = 1.0 / a.val;
  return a.chain(std::log(a.val), inv, -inv * inv);
}

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  detail::require_positive(a.val, "sqrt");
  const double s = std::sqrt(a.val);
  return a.chain(s, 0.5 / s);
}
template <int N>
Dual2<N> sqrt(const Dual2<N>& a) {
  detail::require_positive(a.val, "sqrt");
  const double s = std::sqrt(a.val);
  return a.chain(s, 0.5 / s, -0.25 / (s * a.val));
}

template <int N>
Dual<N> pow(const Dual<N>& a, double p) {
  const double f = std::pow(a.val, p);
  return a.chain(f, p * std::pow(a.val, p - 1.0));
}
template <int N>
Dual2<N> pow(const Dual2<N>& a, double p) {
  const double f = std::pow(a.val, p);
  return a.chain(f, p * std::pow(a.val, p - 1.0), p * (p - 1.0) * std::pow(a.val, p - 2.0));
}

// Plain-double versions so generic code can call ad::exp etc. unqualified
// via ADL-free lookup inside this namespace.
inline double exp(double a) { return std::exp(a); }
inline double log(double a) {
  detail::require_positive(a, "log");
  return std::log(a);
}
inline double sqrt(double a) { return std::sqrt(a); }
inline double pow(double a, double p) { return std::pow(a, p); }

// ---- width dispatch -------------------------------------------------------

/// Largest parameter count supported by gradient()/hessian()/jacobian().
inline constexpr int kMaxWidth = 64;

/// Calls fn(std::integral_constant<int, W>{}) with the smallest supported
/// width W >= n.
template <class Fn>
decltype(auto) dispatch_width(std::size_t n, Fn&& fn) {
  if (n <= 1) return fn(std::integral_constant<int, 1>{});
  if (n <= 2) return fn(std::integral_constant<int, 2>{});
  if (n <= 4) return fn(std::integral_constant<int, 4>{});
  if (n <= 6) return fn(std::integral_constant<int, 6>{});
  if (n <= 9) return fn(std::integral_constant<int, 9>{});
  if (n <= 12) return fn(std::integral_constant<int, 12>{});
  if (n <= 16) return fn(std::integral_constant<int, 16>{});
  if (n <= 25) return fn(std::integral_constant<int, 25>{});
  if (n <= 36) return fn(std::integral_constant<int, 36>{});
  if (n <= 49) return fn(std::integral_constant<int, 49>{});
  if (n <= 64) return fn(std::integral_constant<int, 64>{});
  throw HmmError(ErrorCode::InvalidArgument,
                 "autodiff supports at most " + std::to_string(kMaxWidth) + " parameters, got " +
                     std::to_string(n));
}

// ---- drivers --------------------------------------------------------------

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

template <class S>
std::vector<S> seed_first(std::span<const double> x) {
  std::vector<S> xs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs[i] = S(x[i]);
    xs[i].grad[i] = 1.0;
  }
  return xs;
}

/// Gradient of a scalar function f(const std::vector<S>&) -> S.
template <class F>
std::vector<double> gradient(F&& f, std::span<const double> x) {
  if (x.empty()) return {};
  return dispatch_width(x.size(), [&]<int W>(std::integral_constant<int, W>) {
    const auto xs = seed_first<Dual<W>>(x);
    const Dual<W> y = f(xs);
    return std::vector<double>(y.grad.begin(), y.grad.begin() + static_cast<long>(x.size()));
  });
}

/// Value and gradient in one forward pass.
template <class F>
std::pair<double, std::vector<double>> value_and_gradient(F&& f, std::span<const double> x) {
  if (x.empty()) {
    std::vector<double> empty;
    return {f(empty), {}};
  }
  return dispatch_width(x.size(), [&]<int W>(std::integral_constant<int, W>) {
    const auto xs = seed_first<Dual<W>>(x);
    const Dual<W> y = f(xs);
    return std::pair{y.val,
                     std::vector<double>(y.grad.begin(), y.grad.begin() + static_cast<long>(x.size()))};
  });
}

struct SecondOrder {
  double value = 0.0;
  std::vector<double> gradient;
  Matrix hessian;
};

/// Value, gradient and Hessian via forward-over-forward (Dual2).
template <class F>
SecondOrder second_order(F&& f, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) {
    std::vector<double> empty;
    return {f(empty), {}, Matrix(0, 0)};
  }
  return dispatch_width(n, [&]<int W>(std::integral_constant<int, W>) {
    const auto xs = seed_first<Dual2<W>>(x);
    const Dual2<W> y = f(xs);
    SecondOrder out;
    out.value = y.val;
    out.gradient.assign(y.grad.begin(), y.grad.begin() + static_cast<long>(n));
    out.hessian = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out.hessian(i, j) =
            y.hess[Dual2<W>::packed_index(static_cast<int>(i), static_cast<int>(j))];
      }
    }
    return out;
  });
}

template <class F>
Matrix hessian(F&& f, std::span<const double> x) {
  return second_order(std::forward<F>(f), x).hessian;
}

/// Jacobian of a vector function g(const std::vector<S>&) -> std::vector<S>;
/// row i is the gradient of g_i.
template <class G>
Matrix jacobian(G&& g, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) {
    std::vector<double> empty;
    const auto y = g(empty);
    return Matrix(y.size(), 0);
  }
  return dispatch_width(n, [&]<int W>(std::integral_constant<int, W>) {
    const auto xs = seed_first<Dual<W>>(x);
    const std::vector<Dual<W>> y = g(xs);
    Matrix J(y.size(), n);
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) J(i, j) = y[i].grad[j];
    }
    return J;
  });
}

}  // namespace hmmfit::ad
