#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmetric {

/// Largest state dimension supported by the small fixed-capacity matrix types.
inline constexpr int kMaxDim = 6;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim,
                          kMaxDim>;

// Error categories. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InputError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class UnsupportedError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};
class IllConditionedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class DegenerateSimplexError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Number of independent entries of a symmetric n x n matrix.
constexpr int sym_size(int n) { return n * (n + 1) / 2; }

/// Position of (i, j), i <= j, in the lexicographic upper-triangle order
/// (0,0), (0,1), ..., (0,n-1), (1,1), ...
constexpr int sym_rank(int n, int i, int j) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i - 1) / 2 + (j - i);
}

/// Symmetric matrix stored as its upper triangle. Symmetry is exact by
/// construction: (i, j) and (j, i) address the same slot.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int n) : n_(n) {
    if (n < 1 || n > kMaxDim) {
      throw InputError("SymMatrix: dimension " + std::to_string(n) +
                       " outside [1, " + std::to_string(kMaxDim) + "]");
    }
    data_.fill(0.0);
  }

  static SymMatrix identity(int n) {
    SymMatrix s(n);
    for (int i = 0; i < n; ++i) s(i, i) = 1.0;
    return s;
  }

  /// Takes the upper triangle of `m`; the lower triangle is ignored.
  static SymMatrix from_upper(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    if (m.rows() != m.cols()) throw InputError("SymMatrix: non-square input");
    SymMatrix s(static_cast<int>(m.rows()));
    for (int i = 0; i < s.n_; ++i)
      for (int j = i; j < s.n_; ++j) s(i, j) = m(i, j);
    return s;
  }

  /// Averages `m` with its transpose.
  static SymMatrix symmetrized(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    if (m.rows() != m.cols()) throw InputError("SymMatrix: non-square input");
    SymMatrix s(static_cast<int>(m.rows()));
    for (int i = 0; i < s.n_; ++i)
      for (int j = i; j < s.n_; ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return s;
  }

  int dim() const { return n_; }
  int size() const { return sym_size(n_); }

  double& operator()(int i, int j) { return data_[sym_rank(n_, i, j)]; }
  double operator()(int i, int j) const { return data_[sym_rank(n_, i, j)]; }

  /// Entry by upper-triangle rank.
  double& at_rank(int r) { return data_[r]; }
  double at_rank(int r) const { return data_[r]; }

  Mat dense() const {
    Mat m(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j) m(i, j) = m(j, i) = (*this)(i, j);
    return m;
  }

  SymMatrix& operator+=(const SymMatrix& o) {
    for (int r = 0; r < size(); ++r) data_[r] += o.data_[r];
    return *this;
  }
  SymMatrix& operator*=(double s) {
    for (int r = 0; r < size(); ++r) data_[r] *= s;
    return *this;
  }
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) {
    for (int r = 0; r < a.size(); ++r) a.data_[r] -= b.data_[r];
    return a;
  }

  double max_abs() const {
    double v = 0.0;
    for (int r = 0; r < size(); ++r) v = std::max(v, std::abs(data_[r]));
    return v;
  }

  bool operator==(const SymMatrix& o) const {
    if (n_ != o.n_) return false;
    for (int r = 0; r < size(); ++r)
      if (data_[r] != o.data_[r]) return false;
    return true;
  }

 private:
  int n_ = 0;
  std::array<double, sym_size(kMaxDim)> data_{};
};

/// Axis-aligned box [lo, hi].
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_in, Vec hi_in) : lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (lo.size() != hi.size() || lo.size() < 1) {
      throw InputError("Box: corner dimensions disagree");
    }
    for (int d = 0; d < lo.size(); ++d) {
      if (!(lo[d] <= hi[d])) throw InputError("Box: empty along an axis");
    }
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vec& x, double tol = 0.0) const {
    for (int d = 0; d < dim(); ++d) {
      if (x[d] < lo[d] - tol || x[d] > hi[d] + tol) return false;
    }
    return true;
  }

  bool contains(const Box& other) const {
    for (int d = 0; d < dim(); ++d) {
      if (other.lo[d] < lo[d] || other.hi[d] > hi[d]) return false;
    }
    return true;
  }

  /// max over the box of |x_d|.
  double abs_max(int d) const { return std::max(std::abs(lo[d]), std::abs(hi[d])); }
};

inline Vec make_vec(std::initializer_list<double> v) {
  Vec out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline Box make_box(std::initializer_list<double> lo,
                    std::initializer_list<double> hi) {
  return Box(make_vec(lo), make_vec(hi));
}

inline void check_dim(const Vec& x, int n, const char* where) {
  if (x.size() != n) {
    throw InputError(std::string(where) + ": expected a point of dimension " +
                     std::to_string(n) + ", got " + std::to_string(x.size()));
  }
}

}  // namespace cmetric
