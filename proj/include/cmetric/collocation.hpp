#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmetric/common.hpp"
#include "cmetric/csv.hpp"
#include "cmetric/parallel.hpp"

namespace cmetric {

/// Region test used to filter lattice points. An empty function accepts all.
using RegionPredicate = std::function<bool(const Vec&)>;

/// Closed polygon in the plane (even-odd point-in-polygon rule).
class Polygon {
 public:
  Polygon() = default;
  explicit Polygon(std::vector<std::pair<double, double>> vertices)
      : v_(std::move(vertices)) {
    if (v_.size() >= 2 && v_.front() == v_.back()) v_.pop_back();
    if (v_.size() < 3) throw InputError("Polygon: need at least three vertices");
  }

  static Polygon from_csv(const std::string& path) {
    std::vector<std::pair<double, double>> verts;
    for (const auto& row : read_numeric_csv(path)) {
      if (row.size() != 2) throw InputError("Polygon CSV '" + path + "': rows must be x,y");
      verts.emplace_back(row[0], row[1]);
    }
    return Polygon(std::move(verts));
  }

  bool contains(double x, double y) const {
    bool inside = false;
    for (std::size_t i = 0, j = v_.size() - 1; i < v_.size(); j = i++) {
      const auto [xi, yi] = v_[i];
      const auto [xj, yj] = v_[j];
      if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
        inside = !inside;
      }
    }
    return inside;
  }

  Box bounding_box() const {
    Vec lo = make_vec({v_[0].first, v_[0].second}), hi = lo;
    for (const auto& [x, y] : v_) {
      lo[0] = std::min(lo[0], x);
      lo[1] = std::min(lo[1], y);
      hi[0] = std::max(hi[0], x);
      hi[1] = std::max(hi[1], y);
    }
    return Box(lo, hi);
  }

  const std::vector<std::pair<double, double>>& vertices() const { return v_; }

  RegionPredicate predicate() const {
    return [poly = *this](const Vec& p) { return poly.contains(p[0], p[1]); };
  }

 private:
  std::vector<std::pair<double, double>> v_;
};

/// Intersection of half-spaces a . x <= b.
struct HalfSpace {
  Vec a;
  double b = 0.0;
};

inline RegionPredicate halfspace_predicate(std::vector<HalfSpace> hs) {
  return [hs = std::move(hs)](const Vec& x) {
    for (const auto& h : hs) {
      if (h.a.dot(x) > h.b) return false;
    }
    return true;
  };
}

inline RegionPredicate intersect(RegionPredicate a, RegionPredicate b) {
  if (!a) return b;
  if (!b) return a;
  return [a = std::move(a), b = std::move(b)](const Vec& x) { return a(x) && b(x); };
}

struct CollocationSet {
  std::vector<Vec> points;
  Box domain;
  RegionPredicate region;
  std::optional<double> fill;

  int dim() const { return domain.dim(); }
  std::size_t size() const { return points.size(); }

  bool admits(const Vec& x) const { return domain.contains(x) && (!region || region(x)); }
};

namespace internal {

/// Nudges a lattice coordinate that overshoots the box by rounding back onto
/// the boundary; returns false if it is genuinely outside.
inline bool snap_into(double& v, double lo, double hi, double tol) {
  if (v < lo) {
    if (v < lo - tol) return false;
    v = lo;
  }
  if (v > hi) {
    if (v > hi + tol) return false;
    v = hi;
  }
  return true;
}

}  // namespace internal

/// Points i*alpha*(1, 0) + j*alpha*(1/2, sqrt(3)/2) inside the box and the
/// predicate, ordered by (j, i).
inline CollocationSet hexagonal_grid(const Box& box, double spacing,
                                     RegionPredicate predicate = {}) {
  if (box.dim() != 2) throw UnsupportedError("hexagonal_grid: only n = 2 is supported");
  if (!(spacing > 0.0)) throw InputError("hexagonal_grid: spacing must be positive");
  const double row = spacing * std::sqrt(3.0) / 2.0;
  const double tol = 1e-9 * spacing;
  CollocationSet set;
  set.domain = box;
  set.region = predicate;
  const long j0 = static_cast<long>(std::floor((box.lo[1] - tol) / row));
  const long j1 = static_cast<long>(std::ceil((box.hi[1] + tol) / row));
  for (long j = j0; j <= j1; ++j) {
    double y = static_cast<double>(j) * row;
    if (!internal::snap_into(y, box.lo[1], box.hi[1], tol)) continue;
    const double shift = 0.5 * static_cast<double>(j);
    const long i0 = static_cast<long>(std::floor((box.lo[0] - tol) / spacing - shift));
    const long i1 = static_cast<long>(std::ceil((box.hi[0] + tol) / spacing - shift));
    for (long i = i0; i <= i1; ++i) {
      double x = spacing * (static_cast<double>(i) + shift);
      if (!internal::snap_into(x, box.lo[0], box.hi[0], tol)) continue;
      Vec p = make_vec({x, y});
      if (predicate && !predicate(p)) continue;
      set.points.push_back(p);
    }
  }
  if (set.points.empty()) throw ConfigError("hexagonal_grid: no lattice point in the region");
  return set;
}

/// Lattice spacing * Z^n inside the box and predicate; the last axis varies
/// slowest.
inline CollocationSet rectangular_grid(const Box& box, double spacing,
                                       RegionPredicate predicate = {}) {
  if (!(spacing > 0.0)) throw InputError("rectangular_grid: spacing must be positive");
  const int n = box.dim();
  const double tol = 1e-9 * spacing;
  std::vector<long> first(n), count(n);
  for (int d = 0; d < n; ++d) {
    first[d] = static_cast<long>(std::ceil((box.lo[d] - tol) / spacing));
    const long last = static_cast<long>(std::floor((box.hi[d] + tol) / spacing));
    count[d] = std::max(0L, last - first[d] + 1);
  }
  CollocationSet set;
  set.domain = box;
  set.region = predicate;
  std::vector<long> idx(n, 0);
  bool empty_lattice = false;
  for (int d = 0; d < n; ++d) empty_lattice = empty_lattice || count[d] == 0;
  while (!empty_lattice) {
    Vec p(n);
    bool inside = true;
    for (int d = 0; d < n; ++d) {
      double v = spacing * static_cast<double>(first[d] + idx[d]);
      inside = inside && internal::snap_into(v, box.lo[d], box.hi[d], tol);
      p[d] = v;
    }
    if (inside && (!predicate || predicate(p))) set.points.push_back(p);
    int d = 0;
    while (d < n && ++idx[d] == count[d]) idx[d++] = 0;
    if (d == n) break;
  }
  if (set.points.empty()) throw ConfigError("rectangular_grid: no lattice point in the region");
  return set;
}

/// Approximate fill distance: the largest distance from a probe point to its
/// nearest collocation point, over a probe_density^n grid of the domain
/// restricted to the region. Accurate up to the probe resolution
/// max_d (hi_d - lo_d) / (probe_density - 1).
inline double fill_distance(const CollocationSet& set, int probe_density,
                            int threads = 1) {
  if (probe_density < 2) throw InputError("fill_distance: probe_density must be >= 2");
  const int n = set.dim();
  std::size_t total = 1;
  for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(probe_density);
  std::vector<double> best(total, 0.0);
  parallel_for(total, threads, [&](std::size_t flat) {
    Vec x(n);
    std::size_t rem = flat;
    for (int d = 0; d < n; ++d) {
      const auto i = static_cast<double>(rem % probe_density);
      rem /= probe_density;
      x[d] = set.domain.lo[d] + (set.domain.hi[d] - set.domain.lo[d]) * i / (probe_density - 1);
    }
    if (set.region && !set.region(x)) return;
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& p : set.points) nearest = std::min(nearest, (p - x).squaredNorm());
    best[flat] = std::sqrt(nearest);
  });
  double out = 0.0;
  for (double v : best) out = std::max(out, v);
  return out;
}

inline double probe_resolution(const CollocationSet& set, int probe_density) {
  double r = 0.0;
  for (int d = 0; d < set.dim(); ++d) {
    r = std::max(r, (set.domain.hi[d] - set.domain.lo[d]) / (probe_density - 1));
  }
  return r;
}

inline double min_pairwise_distance(const std::vector<Vec>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      best = std::min(best, (pts[i] - pts[j]).norm());
  return best;
}

inline void write_points_csv(const std::string& path, const std::vector<Vec>& pts) {
  auto out = open_output(path);
  if (pts.empty()) return;
  const int n = static_cast<int>(pts.front().size());
  for (int d = 0; d < n; ++d) out << (d ? "," : "") << "x" << (d + 1);
  out << "\n";
  for (const auto& p : pts) {
    for (int d = 0; d < n; ++d) out << (d ? "," : "") << fmt17(p[d]);
    out << "\n";
  }
}

inline std::vector<Vec> read_points_csv(const std::string& path) {
  std::vector<Vec> pts;
  for (const auto& row : read_numeric_csv(path)) {
    Vec p(static_cast<int>(row.size()));
    for (std::size_t d = 0; d < row.size(); ++d) p[static_cast<int>(d)] = row[d];
    pts.push_back(p);
  }
  return pts;
}

}  // namespace cmetric
