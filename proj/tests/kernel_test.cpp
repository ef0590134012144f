#include "cmetric/kernel.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace cmetric {
namespace {

// Expands (1 - t)^m * sum q_i t^i with integer arithmetic.
std::vector<Rational> expand(int m, const std::vector<long>& q) {
  std::vector<Rational> p(q.begin(), q.end());
  for (int s = 0; s < m; ++s) {
    std::vector<Rational> next(p.size() + 1, Rational(0));
    for (std::size_t i = 0; i < p.size(); ++i) {
      next[i] += p[i];
      next[i + 1] -= p[i];
    }
    p = next;
  }
  return p;
}

void expect_proportional(const RationalPolynomial& got, const std::vector<Rational>& want) {
  ASSERT_EQ(got.coefficients().size(), want.size());
  const Rational ratio = got.coefficient(0) / want[0];
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got.coefficient(static_cast<int>(i)), ratio * want[i]) << "t^" << i;
  }
}

TEST(KernelTest, BaseCase) {
  for (int l = 1; l <= 6; ++l) {
    EXPECT_EQ(wendland_polynomial(l, 0), RationalPolynomial::one_minus_t_pow(l));
  }
}

TEST(KernelTest, Psi11Symbolic) {
  const RationalPolynomial p = wendland_polynomial(1, 1);
  const std::vector<Rational> want{Rational(1, 6), Rational(0), Rational(-1, 2), Rational(1, 3)};
  EXPECT_EQ(p.coefficients(), want);
}

TEST(KernelTest, Psi64MatchesClosedForm) {
  const WendlandKernel ker = build_wendland(2, 4, 0.9);
  EXPECT_EQ(ker.l, 6);
  expect_proportional(ker.poly0, expand(10, {25, 250, 1050, 2250, 2145}));
  EXPECT_EQ(ker.poly0.coefficient(0), Rational(1, 1153152));
}

TEST(KernelTest, Psi53MatchesClosedForm) {
  const WendlandKernel ker = build_wendland(2, 3, 0.5);
  EXPECT_EQ(ker.l, 5);
  expect_proportional(ker.poly0, expand(8, {1, 8, 25, 32}));
}

TEST(KernelTest, PsiAtZero) {
  for (double c : {0.3, 0.9, 2.0}) {
    const WendlandKernel ker = build_wendland(2, 4, c);
    EXPECT_NEAR(psi(ker, 0, 0.0) * 28828800.0, 25.0, 1e-12);
  }
}

TEST(KernelTest, Precondition) {
  EXPECT_THROW(build_wendland(2, 2, 1.0), ConfigError);
  EXPECT_THROW(build_wendland(3, 1, 1.0), ConfigError);
  EXPECT_NO_THROW(build_wendland(3, 2, 1.0));
  EXPECT_NO_THROW(build_wendland(2, 3, 1.0));
  EXPECT_THROW(build_wendland(2, 4, 0.0), ConfigError);
}

TEST(KernelTest, SupportAndArguments) {
  const WendlandKernel ker = build_wendland(2, 4, 0.9);
  for (int q = 0; q <= 2; ++q) {
    EXPECT_EQ(psi(ker, q, 2.0 / 0.9), 0.0);
    EXPECT_EQ(psi(ker, q, 1.0 / 0.9), 0.0);
  }
  EXPECT_GT(psi(ker, 0, 0.0), 0.0);
  EXPECT_THROW(psi(ker, 3, 0.1), InputError);
  EXPECT_THROW(psi(ker, 0, -0.1), InputError);
}

TEST(KernelTest, DerivativeRelation) {
  const double c = 0.9, delta = 1e-6;
  const WendlandKernel ker = build_wendland(2, 4, c);
  for (int i = 1; i < 100; ++i) {
    const double r = i / (100.0 * c);
    for (int q = 0; q < 2; ++q) {
      const double fd = (psi(ker, q, r + delta) - psi(ker, q, r - delta)) / (2 * delta);
      EXPECT_NEAR(psi(ker, q + 1, r) * r, fd, 1e-6 * std::abs(fd)) << "q=" << q << " r=" << r;
    }
  }
}

TEST(KernelTest, SmoothAtSupportBoundary) {
  const WendlandKernel ker = build_wendland(2, 4, 1.0);
  // psi_{6,4} has the factor (1 - t)^10: derivatives through order 2k vanish at t = 1.
  RationalPolynomial p = ker.poly0;
  for (int d = 0; d <= 2 * ker.k; ++d) {
    EXPECT_EQ(p(Rational(1)), Rational(0)) << "order " << d;
    p = p.derivative();
  }
}

TEST(KernelTest, FactoredEvaluationIsAccurate) {
  const WendlandKernel ker = build_wendland(2, 4, 1.0);
  for (double t : {0.0, 0.25, 0.5, 0.9, 0.99, 0.999}) {
    const Rational exact = ker.poly0(Rational(static_cast<long>(std::llround(t * 1000)), 1000));
    const double want = static_cast<double>(exact);
    EXPECT_NEAR(ker.eval0(t), want, 1e-14 * std::abs(want) + 1e-300);
  }
}

TEST(KernelTest, ScaledKernel) {
  const WendlandKernel ker = build_wendland(2, 4, 0.9);
  const WendlandKernel s = ker.scaled(3.0);
  for (int q = 0; q <= 2; ++q) EXPECT_DOUBLE_EQ(psi(s, q, 0.4), 3.0 * psi(ker, q, 0.4));
}

}  // namespace
}  // namespace cmetric
