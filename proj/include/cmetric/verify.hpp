#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "cmetric/common.hpp"
#include "cmetric/cpa.hpp"
#include "cmetric/csv.hpp"
#include "cmetric/dynsys.hpp"
#include "cmetric/mesh.hpp"
#include "cmetric/parallel.hpp"

namespace cmetric {

/// Extreme eigenvalues of a symmetric matrix with an a posteriori error bound
/// (zero for the closed forms used when n <= 2).
struct EigenRange {
  double min = 0.0;
  double max = 0.0;
  double residual = 0.0;
};

inline EigenRange eigen_range(const SymMatrix& A) {
  const int n = A.dim();
  if (n == 1) return {A(0, 0), A(0, 0), 0.0};
  if (n == 2) {
    const double mean = 0.5 * (A(0, 0) + A(1, 1));
    const double r = std::hypot(0.5 * (A(0, 0) - A(1, 1)), A(0, 1));
    return {mean - r, mean + r, 0.0};
  }
  const Mat M = A.dense();
  const Eigen::SelfAdjointEigenSolver<Mat> es(M);
  if (es.info() != Eigen::Success) throw NumericalError("eigen_range: eigensolver failed");
  const auto& ev = es.eigenvalues();
  const Mat& V = es.eigenvectors();
  double residual = 0.0;
  for (int i = 0; i < n; ++i) {
    // Bauer-Fike for symmetric matrices: |lambda - mu| <= ||M v - mu v|| / ||v||.
    residual = std::max(residual, (M * V.col(i) - ev[i] * V.col(i)).norm() / V.col(i).norm());
  }
  return {ev[0], ev[n - 1], residual};
}

inline double spectral_norm(const SymMatrix& A) {
  const EigenRange e = eigen_range(A);
  return std::max(std::abs(e.min), std::abs(e.max)) + e.residual;
}

struct Constraint1Result {
  bool pass = false;
  double min_eig = 0.0;
};

inline Constraint1Result check_constraint1(const SymMatrix& P, double eps0) {
  const EigenRange e = eigen_range(P);
  return {e.min - e.residual >= eps0, e.min};
}

/// Largest spectral norm among the vertex matrices of simplex s.
inline double compute_Cnu(const CpaMetric& cpa, std::size_t s) {
  double c = 0.0;
  for (int t = 0; t <= cpa.dim(); ++t) {
    c = std::max(c, spectral_norm(cpa.vertex_matrix(cpa.triangulation().simplex_vertex(s, t))));
  }
  return c;
}

/// max over i <= j of ||w_ij||_1 on simplex s.
inline double compute_Dnu(const CpaMetric& cpa, std::size_t s) {
  double d = 0.0;
  for (int q = 0; q < sym_size(cpa.dim()); ++q) d = std::max(d, cpa.gradient(s, q).lpNorm<1>());
  return d;
}

inline double compute_Enu(int n, double B, double B3, double C, double D) {
  const double nd = n;
  return nd * nd * (1.0 + 4.0 * std::sqrt(nd)) * B * D + 2.0 * nd * nd * nd * B3 * C;
}

/// P Df + Df^T P + (w_ij . f) at local vertex t of simplex s.
inline SymMatrix assemble_Anu(const CpaMetric& cpa, const SystemModel& sys, std::size_t s,
                              int t) {
  const std::size_t k = cpa.triangulation().simplex_vertex(s, t);
  const Vec x = cpa.triangulation().vertex(k);
  const Mat P = cpa.vertex_matrix(k).dense();
  const Mat J = eval_jacobian(sys, x);
  SymMatrix A = SymMatrix::from_upper(P * J + J.transpose() * P);
  A += cpa.directional(s, eval_f(sys, x));
  return A;
}

struct Constraint4Result {
  bool pass = false;
  double max_eig_inflated = 0.0;
};

inline Constraint4Result check_constraint4(const SymMatrix& A, double h, double E, double eps0) {
  const EigenRange e = eigen_range(A);
  const double inflated = e.max + h * h * E;
  return {inflated + e.residual <= -eps0, inflated};
}

enum class BoundGranularity { PerSimplex, Global };

struct VerificationConfig {
  /// Defaults to 1e-6 * lambda_min(C).
  std::optional<double> eps0;
  std::optional<SymMatrix> C;
  BoundGranularity bounds = BoundGranularity::PerSimplex;
  /// Box for global bounds; defaults to the triangulation's bounding box.
  std::optional<Box> global_box;
  int threads = 1;
};

inline double default_eps0(const SymMatrix& C) { return 1e-6 * eigen_range(C).min; }

inline double resolve_eps0(const VerificationConfig& cfg, int n) {
  if (cfg.eps0) {
    if (!(*cfg.eps0 > 0.0)) throw ConfigError("verification: eps0 must be positive");
    return *cfg.eps0;
  }
  const SymMatrix C = cfg.C.value_or(SymMatrix::identity(n));
  const double e = default_eps0(C);
  if (!(e > 0.0)) throw ConfigError("verification: C must be positive definite");
  return e;
}

struct VerificationReport {
  int n = 0;
  std::string system;
  double eps0 = 0.0;
  BoundGranularity bounds = BoundGranularity::PerSimplex;

  // Per vertex.
  std::vector<double> vertex_min_eig;
  std::vector<std::uint8_t> vertex_c1;
  /// Every (simplex, vertex) pair at this vertex passes Constraint 4.
  std::vector<std::uint8_t> vertex_c4;

  // Per simplex.
  std::vector<double> C_nu, D_nu, E_nu, h_nu, B_nu, B3_nu;
  std::vector<double> worst_inflated;
  std::vector<std::uint8_t> c2_pass, c4_pass, marginal, pass;

  // Per (simplex, vertex), flattened as s * (n + 1) + t.
  std::vector<double> pair_inflated;
  std::vector<std::uint8_t> pair_c4;

  std::size_t num_vertices() const { return vertex_c1.size(); }
  std::size_t num_simplices() const { return pass.size(); }

  std::size_t count(const std::vector<std::uint8_t>& v) const {
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), std::uint8_t{1}));
  }

  double pass_fraction() const {
    return num_simplices() ? static_cast<double>(count(pass)) / num_simplices() : 0.0;
  }

  std::vector<std::size_t> failing_vertices_c1() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < vertex_c1.size(); ++k)
      if (!vertex_c1[k]) out.push_back(k);
    return out;
  }

  std::vector<std::size_t> failing_simplices() const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < pass.size(); ++s)
      if (!pass[s]) out.push_back(s);
    return out;
  }
};

namespace internal {

inline bool is_marginal(double margin, double scale, double residual) {
  return margin < std::max(1e-8 * scale, residual);
}

}  // namespace internal

/// Evaluates Constraints 1-4 at every vertex and (simplex, vertex) pair.
inline VerificationReport verify_all(const CpaMetric& cpa, const SystemModel& sys,
                                     const VerificationConfig& cfg) {
  const Triangulation& tri = cpa.triangulation();
  const int n = tri.dim();
  if (sys.n != n) throw InputError("verify_all: system and triangulation dimensions differ");
  VerificationReport rep;
  rep.n = n;
  rep.system = sys.name;
  rep.eps0 = resolve_eps0(cfg, n);
  rep.bounds = cfg.bounds;
  const double eps0 = rep.eps0;
  const std::size_t nv = tri.num_vertices(), ns = tri.num_simplices();

  rep.vertex_min_eig.resize(nv);
  rep.vertex_c1.resize(nv);
  std::vector<double> vertex_norm(nv);
  std::vector<std::uint8_t> vertex_marginal(nv);
  parallel_for(nv, cfg.threads, [&](std::size_t k) {
    const EigenRange e = eigen_range(cpa.vertex_matrix(k));
    rep.vertex_min_eig[k] = e.min;
    const bool ok = e.min - e.residual >= eps0;
    rep.vertex_c1[k] = ok;
    vertex_norm[k] = std::max(std::abs(e.min), std::abs(e.max)) + e.residual;
    vertex_marginal[k] = ok && internal::is_marginal(e.min - eps0, vertex_norm[k], e.residual);
  });

  DerivativeBounds global{};
  if (cfg.bounds == BoundGranularity::Global) {
    global = derivative_bounds(sys, cfg.global_box.value_or(tri.box()));
  }

  for (auto* v : {&rep.C_nu, &rep.D_nu, &rep.E_nu, &rep.h_nu, &rep.B_nu, &rep.B3_nu,
                  &rep.worst_inflated}) {
    v->resize(ns);
  }
  for (auto* v : {&rep.c2_pass, &rep.c4_pass, &rep.marginal, &rep.pass}) v->resize(ns);
  rep.pair_inflated.resize(ns * (n + 1));
  rep.pair_c4.resize(ns * (n + 1));

  parallel_for(ns, cfg.threads, [&](std::size_t s) {
    double Cn = 0.0;
    bool c1_all = true, marg = false;
    for (int t = 0; t <= n; ++t) {
      const std::size_t k = tri.simplex_vertex(s, t);
      Cn = std::max(Cn, vertex_norm[k]);
      c1_all = c1_all && rep.vertex_c1[k];
      marg = marg || vertex_marginal[k];
    }
    // Constraint 2 re-check: P(x_k) <= C_nu I at every vertex.
    bool c2 = true;
    for (int t = 0; t <= n; ++t) {
      const EigenRange e = eigen_range(cpa.vertex_matrix(tri.simplex_vertex(s, t)));
      c2 = c2 && e.max <= Cn;
    }
    const double Dn = compute_Dnu(cpa, s);
    const DerivativeBounds b =
        cfg.bounds == BoundGranularity::Global ? global : derivative_bounds(sys, tri.simplex_box(s));
    const double En = compute_Enu(n, b.second, b.third, Cn, Dn);
    const double h = tri.diameter(s);
    bool c4_all = true;
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t <= n; ++t) {
      const SymMatrix A = assemble_Anu(cpa, sys, s, t);
      const EigenRange e = eigen_range(A);
      const double inflated = e.max + h * h * En;
      const bool ok = inflated + e.residual <= -eps0;
      rep.pair_inflated[s * (n + 1) + t] = inflated;
      rep.pair_c4[s * (n + 1) + t] = ok;
      c4_all = c4_all && ok;
      worst = std::max(worst, inflated);
      const double scale = std::max({std::abs(e.min), std::abs(e.max), h * h * En, eps0});
      marg = marg || (ok && internal::is_marginal(-eps0 - inflated, scale, e.residual));
    }
    rep.C_nu[s] = Cn;
    rep.D_nu[s] = Dn;
    rep.E_nu[s] = En;
    rep.h_nu[s] = h;
    rep.B_nu[s] = b.second;
    rep.B3_nu[s] = b.third;
    rep.worst_inflated[s] = worst;
    rep.c2_pass[s] = c2;
    rep.c4_pass[s] = c4_all;
    rep.marginal[s] = marg;
    rep.pass[s] = c1_all && c2 && c4_all;
  });

  rep.vertex_c4.assign(nv, 1);
  for (std::size_t s = 0; s < ns; ++s) {
    for (int t = 0; t <= n; ++t) {
      if (!rep.pair_c4[s * (n + 1) + t]) rep.vertex_c4[tri.simplex_vertex(s, t)] = 0;
    }
  }
  return rep;
}

inline void write_report_vertices_csv(const VerificationReport& rep, const Triangulation& tri,
                                      const std::string& path) {
  auto out = open_output(path);
  out << "index";
  for (int d = 0; d < rep.n; ++d) out << ",x" << (d + 1);
  out << ",min_eig_P,c1_pass,c4_pass\n";
  for (std::size_t k = 0; k < rep.num_vertices(); ++k) {
    out << k;
    const Vec v = tri.vertex(k);
    for (int d = 0; d < rep.n; ++d) out << "," << fmt17(v[d]);
    out << "," << fmt17(rep.vertex_min_eig[k]) << "," << int(rep.vertex_c1[k]) << ","
        << int(rep.vertex_c4[k]) << "\n";
  }
}

inline void write_report_simplices_csv(const VerificationReport& rep, const std::string& path) {
  auto out = open_output(path);
  out << "index,C_nu,D_nu,E_nu,h_nu,worst_inflated_max_eig,c4_pass,marginal,pass\n";
  for (std::size_t s = 0; s < rep.num_simplices(); ++s) {
    out << s << "," << fmt17(rep.C_nu[s]) << "," << fmt17(rep.D_nu[s]) << ","
        << fmt17(rep.E_nu[s]) << "," << fmt17(rep.h_nu[s]) << ","
        << fmt17(rep.worst_inflated[s]) << "," << int(rep.c4_pass[s]) << ","
        << int(rep.marginal[s]) << "," << int(rep.pass[s]) << "\n";
  }
}

/// Counts, parameters, pass fraction and the bounding box of passing simplices.
inline nlohmann::ordered_json report_summary(const VerificationReport& rep,
                                             const Triangulation& tri) {
  nlohmann::ordered_json j;
  j["system"] = rep.system;
  j["n"] = rep.n;
  j["counts"] = {
      {"vertices", rep.num_vertices()},
      {"simplices", rep.num_simplices()},
      {"c1_pass_vertices", rep.count(rep.vertex_c1)},
      {"c1_fail_vertices", rep.num_vertices() - rep.count(rep.vertex_c1)},
      {"c4_fail_vertices", rep.num_vertices() - rep.count(rep.vertex_c4)},
      {"c2_pass_simplices", rep.count(rep.c2_pass)},
      {"c4_pass_simplices", rep.count(rep.c4_pass)},
      {"pass_simplices", rep.count(rep.pass)},
      {"marginal_simplices", rep.count(rep.marginal)},
  };
  j["params"] = {
      {"eps0", rep.eps0},
      {"bounds", rep.bounds == BoundGranularity::Global ? "global" : "per_simplex"},
      {"max_diameter", tri.max_diameter()},
      {"max_degeneracy", tri.max_degeneracy()},
  };
  j["pass_fraction"] = rep.pass_fraction();
  std::optional<Box> region;
  for (std::size_t s = 0; s < rep.num_simplices(); ++s) {
    if (!rep.pass[s]) continue;
    const Box b = tri.simplex_box(s);
    if (!region) {
      region = b;
    } else {
      region->lo = region->lo.cwiseMin(b.lo);
      region->hi = region->hi.cwiseMax(b.hi);
    }
  }
  if (region) {
    j["pass_region_box"] = {{"lo", std::vector<double>(region->lo.data(), region->lo.data() + rep.n)},
                            {"hi", std::vector<double>(region->hi.data(), region->hi.data() + rep.n)}};
  } else {
    j["pass_region_box"] = nullptr;
  }
  return j;
}

}  // namespace cmetric
