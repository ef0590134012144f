#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include "cmetric/common.hpp"
#include "cmetric/dynsys.hpp"
#include "cmetric/kernel.hpp"
#include "cmetric/parallel.hpp"

namespace cmetric {

/// Order-4 coefficient block b(i, j, mu, nu) for one pair of collocation
/// points, all indices in [0, n).
class Block4 {
 public:
  explicit Block4(int n) : n_(n), v_(static_cast<std::size_t>(n * n * n * n), 0.0) {}
  int dim() const { return n_; }
  double& operator()(int i, int j, int mu, int nu) { return v_[index(i, j, mu, nu)]; }
  double operator()(int i, int j, int mu, int nu) const { return v_[index(i, j, mu, nu)]; }

 private:
  std::size_t index(int i, int j, int mu, int nu) const {
    return static_cast<std::size_t>(((i * n_ + j) * n_ + mu) * n_ + nu);
  }
  int n_;
  std::vector<double> v_;
};

/// Data of the vector field needed at one collocation point.
struct PointData {
  Vec x;
  Vec f;
  Mat df;
};

inline PointData point_data(const SystemModel& sys, const Vec& x) {
  return {x, eval_f(sys, x), eval_jacobian(sys, x)};
}

/// Coefficients b_{k,l,i,j,mu,nu}: entry (i, j) of F applied at x_l to the
/// (mu, nu) basis term generated by x_k.
inline Block4 assemble_b(const WendlandKernel& ker, const PointData& pk,
                         const PointData& pl) {
  const int n = static_cast<int>(pk.x.size());
  Block4 b(n);
  const Vec diff = pk.x - pl.x;  // x_k - x_l
  const PsiValues ps = psi_all(ker, diff.norm());
  if (ps.psi0 == 0.0 && ps.psi1 == 0.0 && ps.psi2 == 0.0) return b;
  const Mat& A = pk.df;  // Df(x_k)
  const Mat& L = pl.df;  // Df(x_l)
  const double sk = diff.dot(pk.f);    // <x_k - x_l, f(x_k)>
  const double sl = -diff.dot(pl.f);   // <x_l - x_k, f(x_l)>
  const double ff = pl.f.dot(pk.f);    // <f(x_l), f(x_k)>
  const Mat LtA = L.transpose() * A;   // sum_p Df_pi(x_l) Df_pmu(x_k)
  const Mat AtL = A.transpose() * L;   // sum_p Df_pnu(x_k) Df_pj(x_l)
  auto delta = [](int a, int c) { return a == c ? 1.0 : 0.0; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int mu = 0; mu < n; ++mu) {
        for (int nu = 0; nu < n; ++nu) {
          const double dij = delta(i, mu) * delta(j, nu);
          double v = ps.psi0 * (LtA(i, mu) * delta(nu, j) + L(mu, i) * A(j, nu) +
                                A(i, mu) * L(nu, j) + delta(i, mu) * AtL(nu, j));
          v += ps.psi1 * sk * (L(mu, i) * delta(nu, j) + delta(i, mu) * L(nu, j));
          v += ps.psi1 * sl * (A(i, mu) * delta(nu, j) + delta(i, mu) * A(j, nu));
          v -= ps.psi1 * ff * dij;
          v += ps.psi2 * sk * sl * dij;
          b(i, j, mu, nu) = v;
        }
      }
    }
  }
  return b;
}

inline Block4 assemble_b(const SystemModel& sys, const WendlandKernel& ker,
                         const Vec& xk, const Vec& xl) {
  return assemble_b(ker, point_data(sys, xk), point_data(sys, xl));
}

/// Symmetrized coefficients c_{k,l,(i,j),(mu,nu)} for i <= j, mu <= nu, as an
/// m x m matrix indexed by upper-triangle ranks (row (i,j), column (mu,nu)).
inline Eigen::MatrixXd symmetrize_c(const Block4& b) {
  const int n = b.dim();
  const int m = sym_size(n);
  Eigen::MatrixXd c(m, m);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      for (int mu = 0; mu < n; ++mu) {
        for (int nu = mu; nu < n; ++nu) {
          double v;
          if (i == j && mu == nu) {
            v = b(i, i, mu, mu);
          } else if (i == j) {
            v = 0.5 * (b(i, i, mu, nu) + b(i, i, nu, mu));
          } else if (mu == nu) {
            v = b(i, j, mu, mu);
          } else {
            v = 0.25 * (b(i, j, mu, nu) + b(j, i, nu, mu) + b(i, j, nu, mu) + b(j, i, mu, nu));
          }
          c(sym_rank(n, i, j), sym_rank(n, mu, nu)) = v;
        }
      }
    }
  }
  return c;
}

/// Interpolation matrix of the collocation problem. Row (l, (i,j)) and
/// column (k, (mu,nu)) live at l*m + rank(i,j) and k*m + rank(mu,nu).
inline Eigen::MatrixXd build_gram(const WendlandKernel& ker,
                                  const std::vector<PointData>& pts,
                                  int threads = 1) {
  const int n = ker.n;
  const int m = sym_size(n);
  const auto N = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(N * m, N * m);
  parallel_for(pts.size(), threads, [&](std::size_t l) {
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Eigen::MatrixXd c = symmetrize_c(assemble_b(ker, pts[k], pts[l]));
      if (!c.allFinite()) {
        throw NumericalError("build_gram: non-finite entry for pair (k=" +
                             std::to_string(k) + ", l=" + std::to_string(l) + ")");
      }
      G.block(static_cast<Eigen::Index>(l) * m, static_cast<Eigen::Index>(k) * m, m, m) = c;
    }
  });
  return G;
}

inline Eigen::MatrixXd build_gram(const SystemModel& sys, const WendlandKernel& ker,
                                  const std::vector<Vec>& points, int threads = 1) {
  std::vector<PointData> pts;
  pts.reserve(points.size());
  for (const auto& x : points) pts.push_back(point_data(sys, x));
  return build_gram(ker, pts, threads);
}

struct SolveOptions {
  /// Added to the diagonal before factorization (0 = exact collocation).
  double jitter = 0.0;
  /// Estimated condition numbers above this are rejected.
  double max_condition = 1e18;
  /// Iterative refinement sweeps after the direct solve.
  int refinement_steps = 3;
};

struct GammaSolution {
  Eigen::VectorXd gamma;
  /// max |G gamma - rhs| after refinement.
  double residual = 0.0;
  /// Reciprocal 1-norm condition estimate of the factorized matrix.
  double condition = 0.0;
};

/// Right-hand side of the collocation system: -C_ij repeated per point.
inline Eigen::VectorXd collocation_rhs(const SymMatrix& C, Eigen::Index num_points) {
  const int m = C.size();
  Eigen::VectorXd rhs(num_points * m);
  for (Eigen::Index l = 0; l < num_points; ++l)
    for (int r = 0; r < m; ++r) rhs[l * m + r] = -C.at_rank(r);
  return rhs;
}

/// Solves G gamma = -C (per point) by dense Cholesky, falling back to the
/// pivoted LDL^T factorization when G is numerically indefinite.
inline GammaSolution solve_gamma(const Eigen::MatrixXd& gram, const SymMatrix& C,
                                 const SolveOptions& opts = {}) {
  const int m = C.size();
  if (gram.rows() != gram.cols() || gram.rows() % m != 0) {
    throw InputError("solve_gamma: Gram size is not a multiple of n(n+1)/2");
  }
  const Eigen::VectorXd rhs = collocation_rhs(C, gram.rows() / m);
  Eigen::MatrixXd A = gram;
  if (opts.jitter != 0.0) A.diagonal().array() += opts.jitter;

  GammaSolution sol;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  auto refine = [&](const auto& solver) {
    sol.gamma = solver.solve(rhs);
    for (int s = 0; s < opts.refinement_steps; ++s) {
      const Eigen::VectorXd r = rhs - A * sol.gamma;
      const Eigen::VectorXd candidate = sol.gamma + solver.solve(r);
      if ((rhs - A * candidate).lpNorm<Eigen::Infinity>() >=
          r.lpNorm<Eigen::Infinity>()) {
        break;
      }
      sol.gamma = candidate;
    }
  };
  if (llt.info() == Eigen::Success) {
    const double rc = llt.rcond();
    sol.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    refine(llt);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success) {
      throw IllConditionedError(
          "solve_gamma: factorization failed; increase the collocation spacing "
          "or decrease the kernel scale c");
    }
    const double rc = ldlt.rcond();
    sol.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    refine(ldlt);
  }
  if (!(sol.condition <= opts.max_condition) || !sol.gamma.allFinite()) {
    throw IllConditionedError(
        "solve_gamma: estimated condition number " + std::to_string(sol.condition) +
        " exceeds the limit; increase the collocation spacing or decrease the "
        "kernel scale c");
  }
  sol.residual = (A * sol.gamma - rhs).lpNorm<Eigen::Infinity>();
  return sol;
}

/// beta_k(i,i) = gamma_k(i,i); beta_k(i,j) = beta_k(j,i) = gamma_k(i,j) / 2.
inline std::vector<SymMatrix> gamma_to_beta(const Eigen::VectorXd& gamma, int n) {
  const int m = sym_size(n);
  if (gamma.size() % m != 0) throw InputError("gamma_to_beta: length mismatch");
  std::vector<SymMatrix> beta;
  beta.reserve(static_cast<std::size_t>(gamma.size() / m));
  for (Eigen::Index k = 0; k < gamma.size() / m; ++k) {
    SymMatrix b(n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        b(i, j) = (i == j ? 1.0 : 0.5) * gamma[k * m + sym_rank(n, i, j)];
    beta.push_back(b);
  }
  return beta;
}

/// Spatial derivatives dS/dx_p, p = 0..n-1.
struct SymGradient {
  int n = 0;
  std::array<SymMatrix, kMaxDim> d;
};

/// The recovered metric S(x) = sum_k psi0(|x_k - x|) (Df(x_k) beta_k +
/// beta_k Df(x_k)^T) + psi1(|x_k - x|) <x_k - x, f(x_k)> beta_k.
/// Self-contained: the vector field enters only through f and Df at the
/// collocation points, which are stored.
class RecoverySolution {
 public:
  RecoverySolution() = default;
  RecoverySolution(std::string system_name, WendlandKernel kernel,
                   std::vector<PointData> points, std::vector<SymMatrix> beta,
                   SymMatrix C)
      : system_name_(std::move(system_name)),
        kernel_(std::move(kernel)),
        points_(std::move(points)),
        beta_(std::move(beta)),
        C_(C) {
    if (points_.size() != beta_.size()) {
      throw InputError("RecoverySolution: one beta per collocation point required");
    }
    symmetric_part_.reserve(points_.size());
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const Mat b = beta_[k].dense();
      symmetric_part_.push_back(
          SymMatrix::from_upper(points_[k].df * b + b * points_[k].df.transpose()));
    }
  }

  int dim() const { return kernel_.n; }
  const std::string& system_name() const { return system_name_; }
  const WendlandKernel& kernel() const { return kernel_; }
  const std::vector<PointData>& points() const { return points_; }
  const std::vector<SymMatrix>& beta() const { return beta_; }
  const SymMatrix& rhs_matrix() const { return C_; }

  double gram_condition = 0.0;
  double solve_residual = 0.0;

  SymMatrix evaluate(const Vec& x) const {
    const int n = dim();
    SymMatrix S(n);
    const int m = S.size();
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const Vec diff = points_[k].x - x;
      const double r = diff.norm();
      if (kernel_.c * r >= 1.0) continue;
      const PsiValues ps = psi_all(kernel_, r);
      const double w1 = ps.psi1 * diff.dot(points_[k].f);
      for (int q = 0; q < m; ++q) {
        S.at_rank(q) += ps.psi0 * symmetric_part_[k].at_rank(q) + w1 * beta_[k].at_rank(q);
      }
    }
    return S;
  }

  SymGradient gradient(const Vec& x) const {
    const int n = dim();
    SymGradient g;
    g.n = n;
    for (int p = 0; p < n; ++p) g.d[p] = SymMatrix(n);
    const int m = sym_size(n);
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const Vec diff = points_[k].x - x;
      const double r = diff.norm();
      if (kernel_.c * r >= 1.0) continue;
      const PsiValues ps = psi_all(kernel_, r);
      const double proj = diff.dot(points_[k].f);
      for (int p = 0; p < n; ++p) {
        // d/dx_p psi0(|x_k - x|) = -psi1 (x_k - x)_p, likewise psi1 -> psi2.
        const double a = -ps.psi1 * diff[p];
        const double bcoef = -ps.psi2 * diff[p] * proj - ps.psi1 * points_[k].f[p];
        for (int q = 0; q < m; ++q) {
          g.d[p].at_rank(q) += a * symmetric_part_[k].at_rank(q) + bcoef * beta_[k].at_rank(q);
        }
      }
    }
    return g;
  }

 private:
  std::string system_name_;
  WendlandKernel kernel_;
  std::vector<PointData> points_;
  std::vector<SymMatrix> beta_;
  SymMatrix C_;
  std::vector<SymMatrix> symmetric_part_;
};

inline SymMatrix evaluate_S(const RecoverySolution& rec, const Vec& x) {
  check_dim(x, rec.dim(), "evaluate_S");
  return rec.evaluate(x);
}

inline SymGradient evaluate_grad_S(const RecoverySolution& rec, const Vec& x) {
  check_dim(x, rec.dim(), "evaluate_grad_S");
  return rec.gradient(x);
}

/// F(S)(x) = Df(x)^T S(x) + S(x) Df(x) + (grad S_ij(x) . f(x))_ij.
inline SymMatrix evaluate_F_S(const RecoverySolution& rec, const SystemModel& sys,
                              const Vec& x) {
  check_dim(x, rec.dim(), "evaluate_F_S");
  const Mat S = rec.evaluate(x).dense();
  const SymGradient g = rec.gradient(x);
  const Vec f = eval_f(sys, x);
  const Mat J = eval_jacobian(sys, x);
  SymMatrix out = SymMatrix::from_upper(J.transpose() * S + S * J);
  for (int p = 0; p < sys.n; ++p) out += f[p] * g.d[p];
  return out;
}

struct RecoveryOptions {
  SolveOptions solve;
  int threads = 1;
};

/// Assembles and solves the collocation system for F(S) = -C at `points`.
inline RecoverySolution solve_recovery(const SystemModel& sys, const WendlandKernel& ker,
                                       const std::vector<Vec>& points, const SymMatrix& C,
                                       const RecoveryOptions& opts = {}) {
  if (ker.n != sys.n || C.dim() != sys.n) {
    throw InputError("solve_recovery: dimension mismatch between system, kernel and C");
  }
  std::vector<PointData> pts;
  pts.reserve(points.size());
  for (const auto& x : points) pts.push_back(point_data(sys, x));
  const Eigen::MatrixXd G = build_gram(ker, pts, opts.threads);
  const GammaSolution sol = solve_gamma(G, C, opts.solve);
  RecoverySolution rec(sys.name, ker, std::move(pts), gamma_to_beta(sol.gamma, sys.n), C);
  rec.gram_condition = sol.condition;
  rec.solve_residual = sol.residual;
  return rec;
}

inline constexpr int kRecoveryFormatVersion = 1;

inline nlohmann::json recovery_to_json(const RecoverySolution& rec) {
  using nlohmann::json;
  const int n = rec.dim();
  auto sym_json = [](const SymMatrix& s) {
    json a = json::array();
    for (int r = 0; r < s.size(); ++r) a.push_back(s.at_rank(r));
    return a;
  };
  json j;
  j["format"] = "cmetric-recovery";
  j["version"] = kRecoveryFormatVersion;
  j["system"] = rec.system_name();
  j["n"] = n;
  j["kernel"] = {{"k", rec.kernel().k}, {"c", rec.kernel().c}};
  j["C"] = sym_json(rec.rhs_matrix());
  j["gram_condition"] = rec.gram_condition;
  j["solve_residual"] = rec.solve_residual;
  json pts = json::array(), fs = json::array(), dfs = json::array(), betas = json::array();
  for (std::size_t k = 0; k < rec.points().size(); ++k) {
    const auto& p = rec.points()[k];
    json x = json::array(), f = json::array(), df = json::array();
    for (int d = 0; d < n; ++d) {
      x.push_back(p.x[d]);
      f.push_back(p.f[d]);
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) df.push_back(p.df(a, b));
    pts.push_back(x);
    fs.push_back(f);
    dfs.push_back(df);
    betas.push_back(sym_json(rec.beta()[k]));
  }
  j["points"] = pts;
  j["f"] = fs;
  j["jacobian"] = dfs;
  j["beta"] = betas;
  return j;
}

inline RecoverySolution recovery_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "cmetric-recovery") {
      throw InputError("recovery file: unknown format tag");
    }
    const int version = j.at("version").get<int>();
    if (version != kRecoveryFormatVersion) {
      throw InputError("recovery file: unsupported version " + std::to_string(version));
    }
    const int n = j.at("n").get<int>();
    const WendlandKernel ker =
        build_wendland(n, j.at("kernel").at("k").get<int>(), j.at("kernel").at("c").get<double>());
    auto sym_from = [n](const nlohmann::json& a) {
      SymMatrix s(n);
      if (static_cast<int>(a.size()) != s.size()) throw InputError("recovery file: bad matrix size");
      for (int r = 0; r < s.size(); ++r) s.at_rank(r) = a.at(r).get<double>();
      return s;
    };
    const auto& pts = j.at("points");
    std::vector<PointData> data;
    std::vector<SymMatrix> beta;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      PointData p{Vec(n), Vec(n), Mat(n, n)};
      for (int d = 0; d < n; ++d) {
        p.x[d] = pts[k].at(d).get<double>();
        p.f[d] = j.at("f").at(k).at(d).get<double>();
      }
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) p.df(a, b) = j.at("jacobian").at(k).at(a * n + b).get<double>();
      data.push_back(p);
      beta.push_back(sym_from(j.at("beta").at(k)));
    }
    RecoverySolution rec(j.at("system").get<std::string>(), ker, std::move(data),
                         std::move(beta), sym_from(j.at("C")));
    rec.gram_condition = j.value("gram_condition", 0.0);
    rec.solve_residual = j.value("solve_residual", 0.0);
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("recovery file: ") + e.what());
  }
}

inline void save_recovery(const RecoverySolution& rec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write recovery file '" + path + "'");
  out << recovery_to_json(rec).dump() << "\n";
}

inline RecoverySolution load_recovery(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open recovery file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("recovery file '" + path + "': " + e.what());
  }
  return recovery_from_json(j);
}

}  // namespace cmetric
