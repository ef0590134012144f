#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cmetric/common.hpp"
#include "cmetric/csv.hpp"
#include "cmetric/dynsys.hpp"
#include "cmetric/mesh.hpp"
#include "cmetric/parallel.hpp"
#include "cmetric/recovery.hpp"

namespace cmetric {

/// Gradient of the affine interpolant of `values` (one per local vertex, 0 =
/// x_0) on simplex s: X^{-1} (v_1 - v_0, ..., v_n - v_0)^T.
inline Vec simplex_gradient(const Triangulation& tri, std::size_t s,
                            const std::vector<double>& values) {
  const int n = tri.dim();
  if (static_cast<int>(values.size()) != n + 1) {
    throw InputError("simplex_gradient: need n+1 vertex values");
  }
  Vec diff(n);
  for (int i = 0; i < n; ++i) diff[i] = values[i + 1] - values[0];
  return tri.shape(s).shape_inv * diff;
}

/// Per-simplex gradients of the CPA interpolation of scalar vertex values.
inline std::vector<Vec> gradients(const Triangulation& tri,
                                  const std::vector<double>& vertex_values) {
  if (vertex_values.size() != tri.num_vertices()) {
    throw InputError("gradients: one value per vertex required");
  }
  std::vector<Vec> out(tri.num_simplices());
  std::vector<double> local(tri.dim() + 1);
  for (std::size_t s = 0; s < tri.num_simplices(); ++s) {
    for (int t = 0; t <= tri.dim(); ++t) local[t] = vertex_values[tri.simplex_vertex(s, t)];
    out[s] = simplex_gradient(tri, s, local);
  }
  return out;
}

/// CPA matrix field: symmetric vertex matrices and per-simplex gradients
/// w_ij for i <= j. Immutable after construction.
class CpaMetric {
 public:
  CpaMetric(std::shared_ptr<const Triangulation> tri, std::vector<SymMatrix> vertex_P,
            int threads = 1)
      : tri_(std::move(tri)) {
    const int n = tri_->dim();
    const int m = sym_size(n);
    if (vertex_P.size() != tri_->num_vertices()) {
      throw InputError("CpaMetric: one matrix per vertex required");
    }
    vertex_P_.resize(vertex_P.size() * m);
    for (std::size_t k = 0; k < vertex_P.size(); ++k) {
      if (vertex_P[k].dim() != n) throw InputError("CpaMetric: vertex matrix dimension mismatch");
      for (int q = 0; q < m; ++q) vertex_P_[k * m + q] = vertex_P[k].at_rank(q);
    }
    grads_.resize(tri_->num_simplices() * m * n);
    parallel_for(tri_->num_simplices(), threads, [&](std::size_t s) {
      const Mat& inv = tri_->shape(s).shape_inv;
      const std::size_t v0 = tri_->simplex_vertex(s, 0);
      Mat diff(n, m);
      for (int i = 0; i < n; ++i) {
        const std::size_t vi = tri_->simplex_vertex(s, i + 1);
        for (int q = 0; q < m; ++q) diff(i, q) = vertex_P_[vi * m + q] - vertex_P_[v0 * m + q];
      }
      const Eigen::MatrixXd w = inv * diff;
      for (int q = 0; q < m; ++q)
        for (int p = 0; p < n; ++p) grads_[(s * m + q) * n + p] = w(p, q);
    });
  }

  const Triangulation& triangulation() const { return *tri_; }
  std::shared_ptr<const Triangulation> triangulation_ptr() const { return tri_; }
  int dim() const { return tri_->dim(); }

  SymMatrix vertex_matrix(std::size_t k) const {
    const int n = dim();
    SymMatrix P(n);
    for (int q = 0; q < P.size(); ++q) P.at_rank(q) = vertex_P_[k * P.size() + q];
    return P;
  }

  /// w_ij on simplex s for the pair with upper-triangle rank q.
  Vec gradient(std::size_t s, int q) const {
    const int n = dim();
    Vec w(n);
    const std::size_t base = (s * sym_size(n) + q) * n;
    for (int p = 0; p < n; ++p) w[p] = grads_[base + p];
    return w;
  }

  Vec gradient(std::size_t s, int i, int j) const { return gradient(s, sym_rank(dim(), i, j)); }

  /// (w_ij . v)_ij on simplex s.
  SymMatrix directional(std::size_t s, const Vec& v) const {
    const int n = dim();
    SymMatrix out(n);
    for (int q = 0; q < out.size(); ++q) {
      const std::size_t base = (s * out.size() + q) * n;
      double acc = 0.0;
      for (int p = 0; p < n; ++p) acc += grads_[base + p] * v[p];
      out.at_rank(q) = acc;
    }
    return out;
  }

 private:
  std::shared_ptr<const Triangulation> tri_;
  std::vector<double> vertex_P_;
  std::vector<double> grads_;
};

/// P(x_k) = S(x_k) at every vertex, then the per-simplex gradients.
inline CpaMetric interpolate_metric(std::shared_ptr<const Triangulation> tri,
                                    const RecoverySolution& rec, int threads = 1) {
  if (tri->dim() != rec.dim()) throw InputError("interpolate_metric: dimension mismatch");
  std::vector<SymMatrix> values(tri->num_vertices());
  parallel_for(values.size(), threads,
               [&](std::size_t k) { values[k] = rec.evaluate(tri->vertex(k)); });
  return CpaMetric(std::move(tri), std::move(values), threads);
}

inline SymMatrix evaluate_P(const CpaMetric& cpa, const Vec& x) {
  const Triangulation& tri = cpa.triangulation();
  const Location loc = locate(tri, x);
  SymMatrix out(tri.dim());
  for (int t = 0; t <= tri.dim(); ++t) {
    if (loc.weights[t] == 0.0) continue;
    out += loc.weights[t] * cpa.vertex_matrix(tri.simplex_vertex(loc.simplex, t));
  }
  return out;
}

/// (w_ij . f(x))_ij on the simplex chosen by locate.
inline SymMatrix orbital_derivative(const CpaMetric& cpa, const SystemModel& sys, const Vec& x) {
  const Location loc = locate(cpa.triangulation(), x);
  return cpa.directional(loc.simplex, eval_f(sys, x));
}

/// vertices.csv: index, coordinates, upper-triangle entries of P.
/// simplices.csv: index, vertex indices, w_ij components for each i <= j.
inline void write_cpa_csv(const CpaMetric& cpa, const std::string& vertices_path,
                          const std::string& simplices_path) {
  const Triangulation& tri = cpa.triangulation();
  const int n = tri.dim();
  {
    auto out = open_output(vertices_path);
    out << "index";
    for (int d = 0; d < n; ++d) out << ",x" << (d + 1);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) out << ",P" << (i + 1) << (j + 1);
    out << "\n";
    for (std::size_t k = 0; k < tri.num_vertices(); ++k) {
      out << k;
      const Vec v = tri.vertex(k);
      for (int d = 0; d < n; ++d) out << "," << fmt17(v[d]);
      const SymMatrix P = cpa.vertex_matrix(k);
      for (int q = 0; q < P.size(); ++q) out << "," << fmt17(P.at_rank(q));
      out << "\n";
    }
  }
  auto out = open_output(simplices_path);
  out << "index";
  for (int t = 0; t <= n; ++t) out << ",v" << t;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      for (int p = 0; p < n; ++p) out << ",w" << (i + 1) << (j + 1) << "_" << (p + 1);
  out << "\n";
  for (std::size_t s = 0; s < tri.num_simplices(); ++s) {
    out << s;
    for (int t = 0; t <= n; ++t) out << "," << tri.simplex_vertex(s, t);
    for (int q = 0; q < sym_size(n); ++q) {
      const Vec w = cpa.gradient(s, q);
      for (int p = 0; p < n; ++p) out << "," << fmt17(w[p]);
    }
    out << "\n";
  }
}

}  // namespace cmetric
