#pragma once

#include <charconv>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cmetric/common.hpp"

namespace cmetric {

/// An autonomous ODE x' = f(x) together with its Jacobian and rigorous upper
/// bounds on second and third derivatives over axis-aligned boxes.
///
/// bound2(box) >= max |d^2 f_k / dx_i dx_j| and bound3(box) >= max
/// |d^3 f_l / dx_i dx_j dx_k| over the box, for all index combinations. Both
/// must be monotone under box inclusion.
struct SystemModel {
  int n = 0;
  std::string name;
  std::function<Vec(const Vec&)> f;
  std::function<Mat(const Vec&)> jacobian;
  std::function<double(const Box&)> bound2;
  std::function<double(const Box&)> bound3;
};

inline Vec eval_f(const SystemModel& sys, const Vec& x) {
  check_dim(x, sys.n, "eval_f");
  return sys.f(x);
}

inline Mat eval_jacobian(const SystemModel& sys, const Vec& x) {
  check_dim(x, sys.n, "eval_jacobian");
  return sys.jacobian(x);
}

struct DerivativeBounds {
  double second = 0.0;
  double third = 0.0;
};

inline DerivativeBounds derivative_bounds(const SystemModel& sys,
                                          const Box& box) {
  if (box.dim() != sys.n) {
    throw InputError("derivative_bounds: box dimension mismatch");
  }
  return {sys.bound2(box), sys.bound3(box)};
}

namespace internal {

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// max over the box of |a . x + b|; attained at a corner since the map is
/// affine.
inline double affine_abs_max(const Box& box, const Vec& a, double b) {
  double out = 0.0;
  const int n = box.dim();
  for (int mask = 0; mask < (1 << n); ++mask) {
    double v = b;
    for (int d = 0; d < n; ++d) v += a[d] * ((mask >> d) & 1 ? box.hi[d] : box.lo[d]);
    out = std::max(out, std::abs(v));
  }
  return out;
}

}  // namespace internal

/// f(x) = A x.
inline SystemModel linear_system(const Mat& A) {
  if (A.rows() != A.cols() || A.rows() < 1) {
    throw InputError("linear_system: A must be square");
  }
  SystemModel sys;
  sys.n = static_cast<int>(A.rows());
  std::string name = "linear[";
  for (int i = 0; i < A.rows(); ++i) {
    for (int j = 0; j < A.cols(); ++j) {
      if (i + j > 0) name += j == 0 ? ";" : ",";
      name += internal::format_number(A(i, j));
    }
  }
  sys.name = name + "]";
  sys.f = [A](const Vec& x) -> Vec { return A * x; };
  sys.jacobian = [A](const Vec&) -> Mat { return A; };
  sys.bound2 = [](const Box&) { return 0.0; };
  sys.bound3 = [](const Box&) { return 0.0; };
  return sys;
}

/// Van der Pol oscillator with reversed time:
///   x' = -y,  y' = x - 3 (1 - x^2) y.
inline SystemModel vanderpol() {
  SystemModel sys;
  sys.n = 2;
  sys.name = "vanderpol";
  sys.f = [](const Vec& v) -> Vec {
    const double x = v[0], y = v[1];
    return make_vec({-y, x - 3.0 * (1.0 - x * x) * y});
  };
  sys.jacobian = [](const Vec& v) -> Mat {
    const double x = v[0], y = v[1];
    Mat J(2, 2);
    J << 0.0, -1.0, 1.0 + 6.0 * x * y, -3.0 + 3.0 * x * x;
    return J;
  };
  // Nonzero second derivatives of f_2: 6y (xx), 6x (xy).
  sys.bound2 = [](const Box& b) { return 6.0 * std::max(b.abs_max(0), b.abs_max(1)); };
  // Only d^3 f_2 / dx^2 dy = 6.
  sys.bound3 = [](const Box&) { return 6.0; };
  return sys;
}

/// Speed-control system with an optional perturbation eps:
///   x' = y + eps,
///   y' = -kd y - x - g (x^2 + eps) (y / kd + x + 1).
/// eps = 0 is the unperturbed model.
inline SystemModel speed_control_perturbed(double kd, double g, double eps) {
  if (!(kd != 0.0)) throw InputError("speed_control: kd must be nonzero");
  SystemModel sys;
  sys.n = 2;
  sys.name = eps == 0.0
                 ? "speed_control(kd=" + internal::format_number(kd) +
                       ",g=" + internal::format_number(g) + ")"
                 : "speed_control_perturbed(kd=" + internal::format_number(kd) +
                       ",g=" + internal::format_number(g) +
                       ",eps=" + internal::format_number(eps) + ")";
  sys.f = [kd, g, eps](const Vec& v) -> Vec {
    const double x = v[0], y = v[1];
    return make_vec({y + eps, -kd * y - x - g * (x * x + eps) * (y / kd + x + 1.0)});
  };
  sys.jacobian = [kd, g, eps](const Vec& v) -> Mat {
    const double x = v[0], y = v[1];
    Mat J(2, 2);
    J << 0.0, 1.0,
        -1.0 - g * (2.0 * x * (y / kd + x + 1.0) + x * x + eps),
        -kd - g * (x * x + eps) / kd;
    return J;
  };
  // f_2,xx = -g (2y/kd + 6x + 2), f_2,xy = -2 g x / kd, f_2,yy = 0.
  sys.bound2 = [kd, g](const Box& b) {
    const double xx = internal::affine_abs_max(
        b, make_vec({6.0 * g, 2.0 * g / kd}), 2.0 * g);
    const double xy = internal::affine_abs_max(b, make_vec({2.0 * g / kd, 0.0}), 0.0);
    return std::max(xx, xy);
  };
  // f_2,xxx = -6g, f_2,xxy = -2g/kd.
  sys.bound3 = [kd, g](const Box&) {
    return std::max(6.0 * std::abs(g), 2.0 * std::abs(g / kd));
  };
  return sys;
}

inline SystemModel speed_control(double kd = 1.0, double g = 6.0) {
  return speed_control_perturbed(kd, g, 0.0);
}

/// One monomial coefficient * prod_d x_d^exponents[d].
struct PolynomialTerm {
  std::vector<int> exponents;
  double coefficient = 0.0;
};

namespace internal {

/// Applies d/dx_axis to a term; returns false if the term vanishes.
inline bool differentiate(PolynomialTerm& t, int axis) {
  if (t.exponents[axis] == 0) return false;
  t.coefficient *= t.exponents[axis];
  --t.exponents[axis];
  return true;
}

inline double term_value(const PolynomialTerm& t, const Vec& x) {
  double v = t.coefficient;
  for (std::size_t d = 0; d < t.exponents.size(); ++d) {
    for (int p = 0; p < t.exponents[d]; ++p) v *= x[static_cast<int>(d)];
  }
  return v;
}

/// max over the box of |term|, taken coordinate-wise at the extreme |x_d|.
inline double term_abs_max(const PolynomialTerm& t, const Box& box) {
  double v = std::abs(t.coefficient);
  for (std::size_t d = 0; d < t.exponents.size(); ++d) {
    v *= std::pow(box.abs_max(static_cast<int>(d)), t.exponents[d]);
  }
  return v;
}

/// Max over components and over all derivative multi-indices of the given
/// order of the sum of term-wise absolute maxima.
inline double polynomial_bound(
    const std::vector<std::vector<PolynomialTerm>>& components, int n,
    int order, const Box& box) {
  double best = 0.0;
  std::vector<int> axes(order, 0);
  for (const auto& comp : components) {
    std::fill(axes.begin(), axes.end(), 0);
    while (true) {
      double sum = 0.0;
      for (PolynomialTerm t : comp) {
        bool alive = true;
        for (int a : axes) alive = alive && differentiate(t, a);
        if (alive) sum += term_abs_max(t, box);
      }
      best = std::max(best, sum);
      int pos = 0;
      while (pos < order && ++axes[pos] == n) axes[pos++] = 0;
      if (pos == order) break;
    }
  }
  return best;
}

}  // namespace internal

/// Polynomial vector field: components[k] lists the terms of f_k.
/// Derivative bounds bound every monomial by its maximum |value| over the box
/// and sum with the triangle inequality.
inline SystemModel polynomial_system(
    std::string name, int n,
    std::vector<std::vector<PolynomialTerm>> components) {
  if (n < 1 || n > kMaxDim) throw InputError("polynomial_system: bad dimension");
  if (static_cast<int>(components.size()) != n) {
    throw InputError("polynomial_system: expected one term list per component");
  }
  for (const auto& comp : components) {
    for (const auto& t : comp) {
      if (static_cast<int>(t.exponents.size()) != n) {
        throw InputError("polynomial_system: exponent tuple has wrong length");
      }
      for (int e : t.exponents) {
        if (e < 0) throw InputError("polynomial_system: negative exponent");
      }
    }
  }
  SystemModel sys;
  sys.n = n;
  sys.name = std::move(name);
  sys.f = [components, n](const Vec& x) -> Vec {
    Vec out = Vec::Zero(n);
    for (int k = 0; k < n; ++k)
      for (const auto& t : components[k]) out[k] += internal::term_value(t, x);
    return out;
  };
  sys.jacobian = [components, n](const Vec& x) -> Mat {
    Mat J = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k) {
      for (const auto& term : components[k]) {
        for (int i = 0; i < n; ++i) {
          PolynomialTerm t = term;
          if (internal::differentiate(t, i)) J(k, i) += internal::term_value(t, x);
        }
      }
    }
    return J;
  };
  sys.bound2 = [components, n](const Box& b) {
    return internal::polynomial_bound(components, n, 2, b);
  };
  sys.bound3 = [components, n](const Box& b) {
    return internal::polynomial_bound(components, n, 3, b);
  };
  return sys;
}

/// The shipped example systems: van der Pol, speed control (kd = 1, g = 6),
/// its perturbations with eps = 0.01 and eps = 0.1, and f(x) = -x in 2D.
inline std::vector<SystemModel> builtin_systems() {
  return {vanderpol(), speed_control(1.0, 6.0),
          speed_control_perturbed(1.0, 6.0, 0.01),
          speed_control_perturbed(1.0, 6.0, 0.1),
          linear_system(-Mat::Identity(2, 2))};
}

/// Newton iteration for f(x) = 0 from `guess`. Throws NumericalError if it
/// does not converge.
inline Vec find_equilibrium(const SystemModel& sys, Vec x, int max_iter = 100,
                            double tol = 1e-13) {
  check_dim(x, sys.n, "find_equilibrium");
  for (int it = 0; it < max_iter; ++it) {
    const Vec fx = sys.f(x);
    if (fx.lpNorm<Eigen::Infinity>() < tol) return x;
    const Mat J = sys.jacobian(x);
    x -= J.fullPivLu().solve(fx);
  }
  throw NumericalError("find_equilibrium: Newton iteration did not converge");
}

}  // namespace cmetric
