#pragma once

#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "cmetric/common.hpp"

namespace cmetric {

using Rational = boost::multiprecision::cpp_rational;

/// Univariate polynomial with exact rational coefficients, lowest degree
/// first.
class RationalPolynomial {
 public:
  RationalPolynomial() = default;
  explicit RationalPolynomial(std::vector<Rational> coeffs)
      : c_(std::move(coeffs)) {
    trim();
  }

  /// (1 - t)^power.
  static RationalPolynomial one_minus_t_pow(int power) {
    RationalPolynomial p({Rational(1)});
    const RationalPolynomial factor({Rational(1), Rational(-1)});
    for (int i = 0; i < power; ++i) p = p * factor;
    return p;
  }

  int degree() const { return static_cast<int>(c_.size()) - 1; }
  bool is_zero() const { return c_.empty(); }
  const std::vector<Rational>& coefficients() const { return c_; }
  Rational coefficient(int i) const {
    return i < static_cast<int>(c_.size()) ? c_[i] : Rational(0);
  }

  Rational operator()(const Rational& t) const {
    Rational v = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) v = v * t + *it;
    return v;
  }

  friend RationalPolynomial operator*(const RationalPolynomial& a,
                                      const RationalPolynomial& b) {
    if (a.is_zero() || b.is_zero()) return {};
    std::vector<Rational> out(a.c_.size() + b.c_.size() - 1, Rational(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) out[i + j] += a.c_[i] * b.c_[j];
    return RationalPolynomial(std::move(out));
  }

  friend RationalPolynomial operator-(const RationalPolynomial& a,
                                      const RationalPolynomial& b) {
    std::vector<Rational> out(std::max(a.c_.size(), b.c_.size()), Rational(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i) out[i] += a.c_[i];
    for (std::size_t i = 0; i < b.c_.size(); ++i) out[i] -= b.c_[i];
    return RationalPolynomial(std::move(out));
  }

  RationalPolynomial derivative() const {
    if (c_.size() <= 1) return {};
    std::vector<Rational> out(c_.size() - 1);
    for (std::size_t i = 1; i < c_.size(); ++i) out[i - 1] = c_[i] * static_cast<int>(i);
    return RationalPolynomial(std::move(out));
  }

  /// Antiderivative with zero constant term.
  RationalPolynomial antiderivative() const {
    std::vector<Rational> out(c_.size() + 1, Rational(0));
    for (std::size_t i = 0; i < c_.size(); ++i) out[i + 1] = c_[i] / static_cast<int>(i + 1);
    return RationalPolynomial(std::move(out));
  }

  /// t * p(t).
  RationalPolynomial times_t() const {
    if (is_zero()) return {};
    std::vector<Rational> out(c_.size() + 1, Rational(0));
    std::copy(c_.begin(), c_.end(), out.begin() + 1);
    return RationalPolynomial(std::move(out));
  }

  /// p(t) / t; requires a vanishing constant term.
  RationalPolynomial divided_by_t() const {
    if (is_zero()) return {};
    if (c_[0] != 0) {
      throw NumericalError("RationalPolynomial: division by t with nonzero remainder");
    }
    return RationalPolynomial(std::vector<Rational>(c_.begin() + 1, c_.end()));
  }

  /// Splits p(t) = (1 - t)^m q(t) with q(1) != 0. Returns (m, q).
  std::pair<int, RationalPolynomial> factor_one_minus_t() const {
    RationalPolynomial q = *this;
    int m = 0;
    while (!q.is_zero() && q(Rational(1)) == 0) {
      // Synthetic division by (t - 1), then flip the sign for (1 - t).
      const int deg = q.degree();
      std::vector<Rational> s(deg, Rational(0));
      Rational carry = 0;
      for (int i = deg; i >= 1; --i) {
        carry = q.c_[i] + carry;
        s[i - 1] = carry;
      }
      for (auto& v : s) v = -v;
      q = RationalPolynomial(std::move(s));
      ++m;
    }
    return {m, q};
  }

  bool operator==(const RationalPolynomial& o) const { return c_ == o.c_; }

 private:
  void trim() {
    while (!c_.empty() && c_.back() == 0) c_.pop_back();
  }
  std::vector<Rational> c_;
};

/// Wendland's psi_{l,k} on [0, 1] from psi_{l,0}(t) = (1 - t)^l and
/// psi_{l,k+1}(r) = int_r^1 t psi_{l,k}(t) dt, computed exactly. No
/// normalization is applied.
inline RationalPolynomial wendland_polynomial(int l, int k) {
  if (l < 1 || k < 0) throw ConfigError("wendland_polynomial: need l >= 1, k >= 0");
  RationalPolynomial p = RationalPolynomial::one_minus_t_pow(l);
  for (int step = 0; step < k; ++step) {
    const RationalPolynomial anti = p.times_t().antiderivative();
    p = RationalPolynomial({anti(Rational(1))}) - anti;
  }
  return p;
}

/// A polynomial held as (1 - t)^m q(t) in floating point. The factored form
/// keeps evaluation accurate near t = 1, where the monomial expansion cancels.
class FactoredPolynomial {
 public:
  FactoredPolynomial() = default;
  explicit FactoredPolynomial(const RationalPolynomial& p) {
    auto [m, q] = p.factor_one_minus_t();
    multiplicity_ = m;
    for (const auto& c : q.coefficients()) q_.push_back(static_cast<double>(c));
  }

  double operator()(double t) const {
    double v = 0.0;
    for (auto it = q_.rbegin(); it != q_.rend(); ++it) v = v * t + *it;
    const double s = 1.0 - t;
    double w = 1.0;
    for (int i = 0; i < multiplicity_; ++i) w *= s;
    return v * w;
  }

  int multiplicity() const { return multiplicity_; }

 private:
  int multiplicity_ = 0;
  std::vector<double> q_;
};

/// Compactly supported radial kernel psi_0(r) = psi_{l,k}(c r) with
/// l = floor(n/2) + k + 1, and the derived psi_1(r) = psi_0'(r) / r,
/// psi_2(r) = psi_1'(r) / r. The exact polynomials are stored in the scaled
/// variable t = c r; psi_1 and psi_2 pick up factors c^2 and c^4.
struct WendlandKernel {
  int n = 0;
  int k = 0;
  int l = 0;
  double c = 1.0;
  /// Joint amplitude multiplier for psi_0, psi_1, psi_2 (1 = raw recursion).
  double amplitude = 1.0;
  RationalPolynomial poly0;  // psi_{l,k}(t)
  RationalPolynomial poly1;  // psi_{l,k}'(t) / t
  RationalPolynomial poly2;  // (psi_{l,k}'(t) / t)' / t
  FactoredPolynomial eval0, eval1, eval2;

  double support_radius() const { return 1.0 / c; }

  /// Same kernel with all three psi functions multiplied by s.
  WendlandKernel scaled(double s) const {
    WendlandKernel out = *this;
    out.amplitude *= s;
    return out;
  }
};

inline WendlandKernel build_wendland(int n, int k, double c) {
  if (n < 1 || n > kMaxDim) throw ConfigError("build_wendland: unsupported dimension");
  if (n % 2 == 1 ? k < 2 : k < 3) {
    throw ConfigError("build_wendland: smoothness k=" + std::to_string(k) +
                      " too small for n=" + std::to_string(n) +
                      " (need k >= 2 for odd n, k >= 3 for even n)");
  }
  if (!(c > 0.0)) throw ConfigError("build_wendland: scale c must be positive");
  WendlandKernel ker;
  ker.n = n;
  ker.k = k;
  ker.l = n / 2 + k + 1;
  ker.c = c;
  ker.poly0 = wendland_polynomial(ker.l, k);
  ker.poly1 = ker.poly0.derivative().divided_by_t();
  ker.poly2 = ker.poly1.derivative().divided_by_t();
  ker.eval0 = FactoredPolynomial(ker.poly0);
  ker.eval1 = FactoredPolynomial(ker.poly1);
  ker.eval2 = FactoredPolynomial(ker.poly2);
  return ker;
}

/// psi_q(r) for q in {0, 1, 2}; zero outside the support r >= 1/c.
inline double psi(const WendlandKernel& ker, int q, double r) {
  if (q < 0 || q > 2) throw InputError("psi: order must be 0, 1 or 2");
  if (r < 0.0) throw InputError("psi: negative radius");
  const double t = ker.c * r;
  if (t >= 1.0) return 0.0;
  switch (q) {
    case 0:
      return ker.amplitude * ker.eval0(t);
    case 1:
      return ker.amplitude * ker.c * ker.c * ker.eval1(t);
    default: {
      const double c2 = ker.c * ker.c;
      return ker.amplitude * c2 * c2 * ker.eval2(t);
    }
  }
}

/// All three psi values at once (hot path of assembly and evaluation).
struct PsiValues {
  double psi0 = 0.0, psi1 = 0.0, psi2 = 0.0;
};

inline PsiValues psi_all(const WendlandKernel& ker, double r) {
  const double t = ker.c * r;
  if (t >= 1.0) return {};
  const double c2 = ker.c * ker.c;
  return {ker.amplitude * ker.eval0(t), ker.amplitude * c2 * ker.eval1(t),
          ker.amplitude * c2 * c2 * ker.eval2(t)};
}

}  // namespace cmetric
