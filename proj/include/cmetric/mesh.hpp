#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmetric/common.hpp"
#include "cmetric/csv.hpp"
#include "cmetric/parallel.hpp"

namespace cmetric {

/// Per-simplex geometry: shape matrix X (rows x_i - x_0), its inverse, the
/// diameter h and the degeneracy h * ||X^{-1}||_1.
struct SimplexShape {
  Mat shape;
  Mat shape_inv;
  double diameter = 0.0;
  double degeneracy = 0.0;
};

/// Lattice description of a scaled standard (Kuhn) triangulation: vertex
/// coordinate along axis d with lattice index i is offset[d] + step[d] *
/// (base[d] + i).
struct StandardGrid {
  std::vector<long> cells;
  std::vector<long> base;
  Vec offset;
  Vec step;

  double coordinate(int d, long i) const {
    return offset[d] + step[d] * static_cast<double>(base[d] + i);
  }
};

class Triangulation {
 public:
  /// Builds a triangulation from explicit vertices and simplices; the first
  /// vertex of each simplex is its x_0. Throws DegenerateSimplexError on an
  /// affinely dependent simplex.
  Triangulation(int n, std::vector<Vec> vertices,
                std::vector<std::vector<std::int64_t>> simplices, int threads = 1)
      : n_(n) {
    if (n < 1 || n > kMaxDim) throw InputError("Triangulation: unsupported dimension");
    coords_.reserve(vertices.size() * n);
    for (const auto& v : vertices) {
      check_dim(v, n, "Triangulation");
      for (int d = 0; d < n; ++d) coords_.push_back(v[d]);
    }
    for (const auto& s : simplices) {
      if (static_cast<int>(s.size()) != n + 1) {
        throw InputError("Triangulation: simplex needs n+1 vertex indices");
      }
      for (auto idx : s) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= vertices.size()) {
          throw InputError("Triangulation: vertex index out of range");
        }
        simplex_vertices_.push_back(static_cast<std::int32_t>(idx));
      }
    }
    compute_box();
    compute_shapes(threads);
  }

  int dim() const { return n_; }
  std::size_t num_vertices() const { return coords_.size() / n_; }
  std::size_t num_simplices() const { return simplex_vertices_.size() / (n_ + 1); }

  Vec vertex(std::size_t k) const {
    Vec v(n_);
    for (int d = 0; d < n_; ++d) v[d] = coords_[k * n_ + d];
    return v;
  }

  /// Global index of local vertex t (0 = x_0) of simplex s.
  std::size_t simplex_vertex(std::size_t s, int t) const {
    return static_cast<std::size_t>(simplex_vertices_[s * (n_ + 1) + t]);
  }

  /// Shape data of simplex s. Standard triangulations share one record per
  /// Kuhn permutation, taken from the first cell.
  const SimplexShape& shape(std::size_t s) const {
    return shapes_[shape_period_ ? s % shape_period_ : s];
  }
  double diameter(std::size_t s) const { return shape(s).diameter; }
  double degeneracy(std::size_t s) const { return shape(s).degeneracy; }

  /// Axis-aligned bounding box of simplex s.
  Box simplex_box(std::size_t s) const {
    Vec lo = vertex(simplex_vertex(s, 0)), hi = lo;
    for (int t = 1; t <= n_; ++t) {
      const Vec v = vertex(simplex_vertex(s, t));
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return Box(lo, hi);
  }

  /// Bounding box of all vertices (the triangulated domain for standard
  /// triangulations).
  const Box& box() const { return box_; }

  bool is_standard() const { return grid_.has_value(); }
  const std::optional<StandardGrid>& grid() const { return grid_; }

  double max_diameter() const {
    double h = 0.0;
    for (const auto& s : shapes_) h = std::max(h, s.diameter);
    return h;
  }
  double max_degeneracy() const {
    double d = 0.0;
    for (const auto& s : shapes_) d = std::max(d, s.degeneracy);
    return d;
  }

  /// (h, d)-boundedness: every diameter < h and every degeneracy <= d.
  bool is_bounded(double h, double d) const {
    return std::all_of(shapes_.begin(), shapes_.end(), [&](const SimplexShape& s) {
      return s.diameter < h && s.degeneracy <= d;
    });
  }

 private:
  Triangulation() = default;

  void compute_box() {
    if (coords_.empty()) throw InputError("Triangulation: no vertices");
    Vec lo = vertex(0), hi = lo;
    for (std::size_t k = 1; k < num_vertices(); ++k) {
      const Vec v = vertex(k);
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    box_ = Box(lo, hi);
  }

  void compute_shapes(int threads);

  friend Triangulation standard_triangulation_from_grid(int n, StandardGrid grid,
                                                        std::size_t max_vertices,
                                                        int threads);

  int n_ = 0;
  std::vector<double> coords_;
  std::vector<std::int32_t> simplex_vertices_;
  std::vector<SimplexShape> shapes_;
  std::size_t shape_period_ = 0;
  Box box_;
  std::optional<StandardGrid> grid_;
};

/// Shape matrix, inverse, diameter and degeneracy of one simplex given by its
/// n+1 vertices (first = x_0).
inline SimplexShape shape_of(const std::vector<Vec>& verts) {
  const int n = static_cast<int>(verts.front().size());
  SimplexShape out;
  out.shape.resize(n, n);
  for (int i = 0; i < n; ++i) out.shape.row(i) = (verts[i + 1] - verts[0]).transpose();
  for (std::size_t a = 0; a < verts.size(); ++a)
    for (std::size_t b = a + 1; b < verts.size(); ++b)
      out.diameter = std::max(out.diameter, (verts[a] - verts[b]).norm());
  const Eigen::FullPivLU<Mat> lu(out.shape);
  // Scale-free singularity test: |det X| relative to h^n.
  const double det = lu.determinant();
  if (!lu.isInvertible() || !(std::abs(det) > 1e-12 * std::pow(out.diameter, n))) {
    throw DegenerateSimplexError("simplex with affinely dependent vertices");
  }
  out.shape_inv = lu.inverse();
  out.degeneracy = out.diameter * out.shape_inv.cwiseAbs().colwise().sum().maxCoeff();
  return out;
}

inline void Triangulation::compute_shapes(int threads) {
  const std::size_t count = shape_period_ ? shape_period_ : num_simplices();
  shapes_.resize(count);
  parallel_for(count, threads, [&](std::size_t s) {
    std::vector<Vec> verts;
    for (int t = 0; t <= n_; ++t) verts.push_back(vertex(simplex_vertex(s, t)));
    try {
      shapes_[s] = shape_of(verts);
    } catch (const DegenerateSimplexError&) {
      throw DegenerateSimplexError("simplex " + std::to_string(s) +
                                   " has affinely dependent vertices");
    }
  });
}

/// Per-simplex (X, X^{-1}, h, degeneracy), recomputed from the vertices.
inline std::vector<SimplexShape> shape_and_bounds(const Triangulation& tri) {
  std::vector<SimplexShape> out;
  out.reserve(tri.num_simplices());
  for (std::size_t s = 0; s < tri.num_simplices(); ++s) {
    std::vector<Vec> verts;
    for (int t = 0; t <= tri.dim(); ++t) verts.push_back(tri.vertex(tri.simplex_vertex(s, t)));
    try {
      out.push_back(shape_of(verts));
    } catch (const DegenerateSimplexError&) {
      throw DegenerateSimplexError("simplex " + std::to_string(s) +
                                   " has affinely dependent vertices");
    }
  }
  return out;
}

namespace internal {

inline long factorial(int n) {
  long f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Lexicographic rank of a permutation of 0..n-1 (Lehmer code), matching
/// the order std::next_permutation enumerates from the identity.
inline long permutation_rank(const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  long rank = 0;
  for (int i = 0; i < n; ++i) {
    int smaller = 0;
    for (int j = i + 1; j < n; ++j) smaller += perm[j] < perm[i];
    rank += smaller * factorial(n - 1 - i);
  }
  return rank;
}

}  // namespace internal

inline Triangulation standard_triangulation_from_grid(int n, StandardGrid grid,
                                                      std::size_t max_vertices,
                                                      int threads) {
  std::size_t nv = 1, ncells = 1;
  for (int d = 0; d < n; ++d) {
    if (grid.cells[d] < 1) throw InputError("standard_triangulation: need at least one cell per axis");
    nv *= static_cast<std::size_t>(grid.cells[d] + 1);
    ncells *= static_cast<std::size_t>(grid.cells[d]);
  }
  if (nv > max_vertices || nv > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max())) {
    throw ResourceError("standard_triangulation: " + std::to_string(nv) +
                        " vertices exceed the budget of " + std::to_string(max_vertices));
  }
  Triangulation tri;
  tri.n_ = n;
  tri.coords_.resize(nv * n);
  std::vector<std::size_t> vstride(n, 1);
  for (int d = 1; d < n; ++d) vstride[d] = vstride[d - 1] * static_cast<std::size_t>(grid.cells[d - 1] + 1);
  for (std::size_t k = 0; k < nv; ++k) {
    std::size_t rem = k;
    for (int d = 0; d < n; ++d) {
      const auto i = static_cast<long>(rem % static_cast<std::size_t>(grid.cells[d] + 1));
      rem /= static_cast<std::size_t>(grid.cells[d] + 1);
      tri.coords_[k * n + d] = grid.coordinate(d, i);
    }
  }
  const long nperm = internal::factorial(n);
  tri.simplex_vertices_.reserve(ncells * nperm * (n + 1));
  std::vector<long> cell(n, 0);
  for (std::size_t c = 0; c < ncells; ++c) {
    std::size_t rem = c;
    for (int d = 0; d < n; ++d) {
      cell[d] = static_cast<long>(rem % static_cast<std::size_t>(grid.cells[d]));
      rem /= static_cast<std::size_t>(grid.cells[d]);
    }
    std::size_t corner = 0;
    for (int d = 0; d < n; ++d) corner += static_cast<std::size_t>(cell[d]) * vstride[d];
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::size_t v = corner;
      tri.simplex_vertices_.push_back(static_cast<std::int32_t>(v));
      for (int t = 0; t < n; ++t) {
        v += vstride[perm[t]];
        tri.simplex_vertices_.push_back(static_cast<std::int32_t>(v));
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  tri.grid_ = std::move(grid);
  tri.shape_period_ = static_cast<std::size_t>(nperm);
  tri.compute_box();
  tri.compute_shapes(threads);
  return tri;
}

inline constexpr std::size_t kDefaultMaxVertices = 6'000'000;

/// Kuhn triangulation of the lattice rho * Z^n covering `box`; the box is
/// expanded outward to lattice points. Each cell is split into n! simplices.
inline Triangulation standard_triangulation(const Box& box, double rho,
                                            std::size_t max_vertices = kDefaultMaxVertices,
                                            int threads = 1) {
  if (!(rho > 0.0)) throw InputError("standard_triangulation: rho must be positive");
  const int n = box.dim();
  StandardGrid g;
  g.offset = Vec::Zero(n);
  g.step = Vec::Constant(n, rho);
  for (int d = 0; d < n; ++d) {
    const double tol = 1e-9;
    const long first = static_cast<long>(std::floor(box.lo[d] / rho + tol));
    const long last = static_cast<long>(std::ceil(box.hi[d] / rho - tol));
    g.base.push_back(first);
    g.cells.push_back(std::max(1L, last - first));
  }
  return standard_triangulation_from_grid(n, std::move(g), max_vertices, threads);
}

/// Kuhn triangulation of `box` with vertices_per_axis[d] equally spaced
/// vertices along axis d (a per-axis scaled standard triangulation).
inline Triangulation standard_triangulation_counts(const Box& box,
                                                   const std::vector<long>& vertices_per_axis,
                                                   std::size_t max_vertices = kDefaultMaxVertices,
                                                   int threads = 1) {
  const int n = box.dim();
  if (static_cast<int>(vertices_per_axis.size()) != n) {
    throw InputError("standard_triangulation: one vertex count per axis required");
  }
  StandardGrid g;
  g.offset = box.lo;
  g.step = Vec(n);
  for (int d = 0; d < n; ++d) {
    if (vertices_per_axis[d] < 2) throw InputError("standard_triangulation: need >= 2 vertices per axis");
    if (!(box.hi[d] > box.lo[d])) throw InputError("standard_triangulation: degenerate box");
    g.cells.push_back(vertices_per_axis[d] - 1);
    g.base.push_back(0);
    g.step[d] = (box.hi[d] - box.lo[d]) / static_cast<double>(vertices_per_axis[d] - 1);
  }
  return standard_triangulation_from_grid(n, std::move(g), max_vertices, threads);
}

struct Location {
  std::size_t simplex = 0;
  /// Barycentric weights for the simplex's local vertices 0..n.
  std::vector<double> weights;
};

namespace internal {

inline void snap_weights(std::vector<double>& w) {
  for (double& v : w) {
    if (v < 0.0 && v >= -1e-12) v = 0.0;
  }
}

inline Location locate_standard(const Triangulation& tri, const Vec& x) {
  const int n = tri.dim();
  const StandardGrid& g = *tri.grid();
  std::vector<double> local(n);
  std::size_t cell_flat = 0, stride = 1;
  for (int d = 0; d < n; ++d) {
    const double lo = g.coordinate(d, 0);
    const double u = (x[d] - lo) / g.step[d];
    long c = static_cast<long>(std::floor(u));
    c = std::clamp(c, 0L, g.cells[d] - 1);
    local[d] = std::clamp(u - static_cast<double>(c), 0.0, 1.0);
    cell_flat += static_cast<std::size_t>(c) * stride;
    stride *= static_cast<std::size_t>(g.cells[d]);
  }
  // Kuhn simplex of permutation pi holds local coordinates with
  // u[pi0] >= u[pi1] >= ... ; ties resolve to the lower axis first.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return local[a] > local[b]; });
  Location loc;
  loc.simplex = cell_flat * static_cast<std::size_t>(factorial(n)) +
                static_cast<std::size_t>(permutation_rank(perm));
  loc.weights.resize(n + 1);
  loc.weights[0] = 1.0 - local[perm[0]];
  for (int t = 1; t < n; ++t) loc.weights[t] = local[perm[t - 1]] - local[perm[t]];
  loc.weights[n] = local[perm[n - 1]];
  return loc;
}

}  // namespace internal

/// Barycentric coordinates of x in simplex s (may be negative if x is outside).
inline std::vector<double> barycentric(const Triangulation& tri, std::size_t s, const Vec& x) {
  const int n = tri.dim();
  const Vec x0 = tri.vertex(tri.simplex_vertex(s, 0));
  const Vec lam = tri.shape(s).shape_inv.transpose() * (x - x0);
  std::vector<double> w(n + 1);
  w[0] = 1.0 - lam.sum();
  for (int i = 0; i < n; ++i) w[i + 1] = lam[i];
  return w;
}

/// Finds a simplex containing x and its barycentric weights. Constant time on
/// standard triangulations, a linear scan otherwise.
inline Location locate(const Triangulation& tri, const Vec& x) {
  check_dim(x, tri.dim(), "locate");
  const Box& box = tri.box();
  double scale = 1.0;
  for (int d = 0; d < tri.dim(); ++d) scale = std::max({scale, std::abs(box.lo[d]), std::abs(box.hi[d])});
  if (!box.contains(x, 1e-12 * scale)) {
    throw OutOfDomainError("locate: point outside the triangulated domain");
  }
  if (tri.is_standard()) {
    Location loc = internal::locate_standard(tri, x);
    internal::snap_weights(loc.weights);
    return loc;
  }
  for (std::size_t s = 0; s < tri.num_simplices(); ++s) {
    std::vector<double> w = barycentric(tri, s, x);
    if (std::all_of(w.begin(), w.end(), [](double v) { return v >= -1e-12; })) {
      internal::snap_weights(w);
      return {s, std::move(w)};
    }
  }
  throw OutOfDomainError("locate: point not covered by any simplex");
}

inline void write_mesh_csv(const Triangulation& tri, const std::string& vertices_path,
                           const std::string& simplices_path) {
  const int n = tri.dim();
  {
    auto out = open_output(vertices_path);
    out << "index";
    for (int d = 0; d < n; ++d) out << ",x" << (d + 1);
    out << "\n";
    for (std::size_t k = 0; k < tri.num_vertices(); ++k) {
      out << k;
      const Vec v = tri.vertex(k);
      for (int d = 0; d < n; ++d) out << "," << fmt17(v[d]);
      out << "\n";
    }
  }
  auto out = open_output(simplices_path);
  out << "index";
  for (int t = 0; t <= n; ++t) out << ",v" << t;
  out << "\n";
  for (std::size_t s = 0; s < tri.num_simplices(); ++s) {
    out << s;
    for (int t = 0; t <= n; ++t) out << "," << tri.simplex_vertex(s, t);
    out << "\n";
  }
}

}  // namespace cmetric
