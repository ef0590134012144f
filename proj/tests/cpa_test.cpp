#include "cmetric/cpa.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "cmetric/collocation.hpp"

namespace cmetric {
namespace {

std::shared_ptr<const Triangulation> grid(double rho, double a = 1.0) {
  return std::make_shared<const Triangulation>(standard_triangulation(make_box({-a, -a}, {a, a}), rho));
}

std::shared_ptr<const Triangulation> single(std::vector<Vec> v) {
  return std::make_shared<const Triangulation>(2, std::move(v), std::vector<std::vector<std::int64_t>>{{0, 1, 2}});
}

SymMatrix affine_matrix(const Vec& x) {
  SymMatrix P(2);
  P(0, 0) = 2.0 + 0.5 * x[0] - 0.25 * x[1];
  P(0, 1) = -0.3 * x[0] + 0.7 * x[1] + 0.1;
  P(1, 1) = 1.0 + 1.5 * x[1];
  return P;
}

CpaMetric affine_cpa(std::shared_ptr<const Triangulation> tri) {
  std::vector<SymMatrix> values;
  for (std::size_t k = 0; k < tri->num_vertices(); ++k) values.push_back(affine_matrix(tri->vertex(k)));
  return CpaMetric(tri, values);
}

TEST(CpaTest, GradientExamples) {
  const auto unit = single({make_vec({0, 0}), make_vec({1, 0}), make_vec({0, 1})});
  const Vec w = simplex_gradient(*unit, 0, {0, 1, 2});
  EXPECT_EQ(w, make_vec({1, 2}));
  EXPECT_EQ(simplex_gradient(*unit, 0, {5, 5, 5}), make_vec({0, 0}));
  const auto half = single({make_vec({0, 0}), make_vec({0.5, 0}), make_vec({0.5, 0.5})});
  const Vec w2 = simplex_gradient(*half, 0, {0, 1, 1});
  EXPECT_NEAR(w2[0], 2.0, 1e-15);
  EXPECT_NEAR(w2[1], 0.0, 1e-15);
  EXPECT_THROW(simplex_gradient(*unit, 0, {1, 2}), InputError);
}

TEST(CpaTest, ScalarGradients) {
  const auto tri = grid(0.25);
  std::vector<double> values;
  for (std::size_t k = 0; k < tri->num_vertices(); ++k) values.push_back(3.0 - tri->vertex(k)[0] + 2.0 * tri->vertex(k)[1]);
  for (const auto& w : gradients(*tri, values)) {
    EXPECT_NEAR(w[0], -1.0, 1e-12);
    EXPECT_NEAR(w[1], 2.0, 1e-12);
  }
}

TEST(CpaTest, ConstantValuesHaveZeroGradient) {
  const auto tri = grid(0.2);
  SymMatrix M(2);
  M(0, 0) = 3;
  M(0, 1) = -1;
  M(1, 1) = 2;
  const CpaMetric cpa(tri, std::vector<SymMatrix>(tri->num_vertices(), M));
  for (std::size_t s = 0; s < tri->num_simplices(); ++s)
    for (int q = 0; q < 3; ++q) EXPECT_EQ(cpa.gradient(s, q), make_vec({0, 0}));
  EXPECT_EQ(orbital_derivative(cpa, vanderpol(), make_vec({0.3, 0.4})).max_abs(), 0.0);
}

TEST(CpaTest, AffineReproduction) {
  const auto tri = grid(0.2);
  const CpaMetric cpa = affine_cpa(tri);
  for (std::size_t s = 0; s < tri->num_simplices(); ++s) {
    EXPECT_LE((cpa.gradient(s, 0, 0) - make_vec({0.5, -0.25})).norm(), 1e-12);
    EXPECT_LE((cpa.gradient(s, 0, 1) - make_vec({-0.3, 0.7})).norm(), 1e-12);
    EXPECT_LE((cpa.gradient(s, 1, 1) - make_vec({0.0, 1.5})).norm(), 1e-12);
  }
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 500; ++i) {
    const Vec x = make_vec({u(rng), u(rng)});
    EXPECT_LE((evaluate_P(cpa, x) - affine_matrix(x)).max_abs(), 1e-12);
  }
  // P_ij(x) = a.x + b with constant f: every entry of the orbital derivative is a.f.
  const SystemModel drift = [] {
    SystemModel s = linear_system(Mat::Zero(2, 2));
    s.f = [](const Vec&) { return make_vec({0.4, -1.1}); };
    return s;
  }();
  const SymMatrix od = orbital_derivative(cpa, drift, make_vec({0.05, 0.3}));
  EXPECT_NEAR(od(0, 0), 0.5 * 0.4 + 0.25 * 1.1, 1e-12);
  EXPECT_NEAR(od(0, 1), -0.3 * 0.4 - 0.7 * 1.1, 1e-12);
  EXPECT_NEAR(od(1, 1), -1.5 * 1.1, 1e-12);
}

TEST(CpaTest, VertexValuesAndCentroid) {
  const auto tri = grid(0.25);
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<SymMatrix> values;
  for (std::size_t k = 0; k < tri->num_vertices(); ++k) {
    SymMatrix M(2);
    M(0, 0) = u(rng);
    M(0, 1) = u(rng);
    M(1, 1) = u(rng);
    values.push_back(M);
  }
  const CpaMetric cpa(tri, values);
  for (std::size_t k = 0; k < tri->num_vertices(); ++k) EXPECT_EQ(evaluate_P(cpa, tri->vertex(k)), values[k]);
  for (std::size_t s = 0; s < tri->num_simplices(); s += 5) {
    Vec c = Vec::Zero(2);
    SymMatrix mean(2);
    for (int t = 0; t < 3; ++t) {
      c += tri->vertex(tri->simplex_vertex(s, t)) / 3.0;
      mean += (1.0 / 3.0) * values[tri->simplex_vertex(s, t)];
    }
    EXPECT_LE((evaluate_P(cpa, c) - mean).max_abs(), 1e-12);
    // Affine function from w and vertex 0 reproduces all vertex values.
    const Vec x0 = tri->vertex(tri->simplex_vertex(s, 0));
    for (int t = 1; t < 3; ++t) {
      const Vec xt = tri->vertex(tri->simplex_vertex(s, t));
      for (int q = 0; q < 3; ++q) {
        const double pred = values[tri->simplex_vertex(s, 0)].at_rank(q) + cpa.gradient(s, q).dot(xt - x0);
        EXPECT_NEAR(pred, values[tri->simplex_vertex(s, t)].at_rank(q), 1e-10);
      }
    }
  }
}

TEST(CpaTest, ContinuousAcrossFaces) {
  const auto tri = grid(0.25);
  std::vector<SymMatrix> values;
  for (std::size_t k = 0; k < tri->num_vertices(); ++k) {
    const Vec x = tri->vertex(k);
    SymMatrix M(2);
    M(0, 0) = std::sin(3 * x[0]) + x[1] * x[1];
    M(0, 1) = std::cos(x[0] * x[1]);
    M(1, 1) = std::exp(x[0]);
    values.push_back(M);
  }
  const CpaMetric cpa(tri, values);
  // Evaluate the affine piece of each simplex at its edge midpoints; pieces
  // sharing the edge must agree.
  std::map<std::pair<std::size_t, std::size_t>, SymMatrix> seen;
  for (std::size_t s = 0; s < tri->num_simplices(); ++s) {
    const Vec x0 = tri->vertex(tri->simplex_vertex(s, 0));
    const SymMatrix P0 = values[tri->simplex_vertex(s, 0)];
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        const std::size_t va = tri->simplex_vertex(s, a), vb = tri->simplex_vertex(s, b);
        const Vec mid = 0.5 * (tri->vertex(va) + tri->vertex(vb));
        SymMatrix P(2);
        for (int q = 0; q < 3; ++q) P.at_rank(q) = P0.at_rank(q) + cpa.gradient(s, q).dot(mid - x0);
        const auto key = std::minmax(va, vb);
        auto it = seen.find(key);
        if (it == seen.end()) {
          seen.emplace(key, P);
        } else {
          EXPECT_LE((it->second - P).max_abs(), 1e-10);
        }
      }
    }
  }
}

TEST(CpaTest, InterpolateMetricMatchesRecoveryAtVertices) {
  const SystemModel vdp = vanderpol();
  const auto set = hexagonal_grid(make_box({-1, -1}, {1, 1}), 0.3);
  const RecoverySolution rec = solve_recovery(vdp, build_wendland(2, 4, 0.9), set.points, SymMatrix::identity(2));
  const auto tri = grid(0.1, 0.8);
  const CpaMetric cpa = interpolate_metric(tri, rec);
  for (std::size_t k = 0; k < tri->num_vertices(); k += 3) {
    const SymMatrix S = evaluate_S(rec, tri->vertex(k));
    EXPECT_EQ(cpa.vertex_matrix(k), S);
    EXPECT_LE((evaluate_P(cpa, tri->vertex(k)) - S).max_abs(), 1e-14 * S.max_abs());
  }
  EXPECT_THROW(evaluate_P(cpa, make_vec({0.9, 0})), OutOfDomainError);
}

TEST(CpaTest, InterpolationErrorBoundAndDecay) {
  const SystemModel vdp = vanderpol();
  const auto set = hexagonal_grid(make_box({-1, -1}, {1, 1}), 0.3);
  const RecoverySolution rec = solve_recovery(vdp, build_wendland(2, 4, 0.9), set.points, SymMatrix::identity(2));
  std::vector<Vec> probes;
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (int i = 0; i < 300; ++i) probes.push_back(make_vec({u(rng), u(rng)}));

  // Second derivatives of S by central differences on a fine grid.
  double hess = 0.0;
  const double h = 1e-3;
  for (double x = -0.8; x <= 0.8; x += 0.02) {
    for (double y = -0.8; y <= 0.8; y += 0.02) {
      const Vec p = make_vec({x, y});
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          Vec pp = p, pm = p, mp = p, mm = p;
          pp[a] += h; pp[b] += h;
          pm[a] += h; pm[b] -= h;
          mp[a] -= h; mp[b] += h;
          mm[a] -= h; mm[b] -= h;
          const SymMatrix d = (1.0 / (4 * h * h)) *
                              (evaluate_S(rec, pp) - evaluate_S(rec, pm) - evaluate_S(rec, mp) + evaluate_S(rec, mm));
          hess = std::max(hess, d.max_abs());
        }
      }
    }
  }
  auto max_error = [&](double rho) {
    const CpaMetric cpa = interpolate_metric(grid(rho, 0.8), rec);
    double e = 0.0;
    for (const auto& p : probes) {
      const Mat d = (evaluate_P(cpa, p) - evaluate_S(rec, p)).dense();
      e = std::max(e, Eigen::SelfAdjointEigenSolver<Mat>(d).eigenvalues().cwiseAbs().maxCoeff());
    }
    return e;
  };
  const double rho = 0.1;
  const double e1 = max_error(rho);
  const double e2 = max_error(rho / 2);
  EXPECT_LE(e1, 2 * std::pow(std::sqrt(2.0) * rho, 2) * hess);
  EXPECT_GE(e1 / e2, 3.0);
}

TEST(CpaTest, CsvHeaders) {
  const auto tri = grid(0.5);
  const CpaMetric cpa = affine_cpa(tri);
  const auto dir = std::filesystem::temp_directory_path();
  write_cpa_csv(cpa, (dir / "cmetric_v.csv").string(), (dir / "cmetric_s.csv").string());
  std::ifstream v(dir / "cmetric_v.csv"), s(dir / "cmetric_s.csv");
  std::string line;
  std::getline(v, line);
  EXPECT_EQ(line, "index,x1,x2,P11,P12,P22");
  std::getline(s, line);
  EXPECT_EQ(line, "index,v0,v1,v2,w11_1,w11_2,w12_1,w12_2,w22_1,w22_2");
  std::size_t rows = 0;
  while (std::getline(s, line)) ++rows;
  EXPECT_EQ(rows, tri->num_simplices());
}

}  // namespace
}  // namespace cmetric
