#include "ignd/numkit.hpp"

#include <gtest/gtest.h>

#include "ignd/errors.hpp"
#include "ignd/rng.hpp"

namespace ignd {
namespace {

Vector random_vector(Index m, Rng& rng) {
  Vector v(m);
  for (Index i = 0; i < m; ++i) v[i] = rng.normal();
  return v;
}

TEST(NullSpaceBasis, CoordinateCase) {
  const Matrix z = null_space_basis(Vector(Eigen::Vector2d(1, 0)));
  ASSERT_EQ(z.rows(), 2);
  ASSERT_EQ(z.cols(), 1);
  EXPECT_DOUBLE_EQ(std::abs(z(1, 0)), 1.0);
  EXPECT_DOUBLE_EQ(z(0, 0), 0.0);
}

TEST(NullSpaceBasis, ZeroGradientThrows) {
  EXPECT_THROW(null_space_basis(Vector(Eigen::Vector2d(0, 0))), ZeroGradient);
}

TEST(NullSpaceBasis, OrthonormalAndOrthogonalToG) {
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    const auto m = static_cast<Index>(rng.uniform_int(2, 20));
    const Vector g = random_vector(m, rng);
    const Matrix z = null_space_basis(g);
    ASSERT_EQ(z.cols(), m - 1);
    EXPECT_LE((z.transpose() * z - Matrix::Identity(m - 1, m - 1)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((z.transpose() * g).cwiseAbs().maxCoeff(), 1e-12 * g.norm());
  }
}

TEST(NullSpaceBasis, SingleCoordinateIsEmpty) {
  const Matrix z = null_space_basis(Vector::Constant(1, 3.0));
  EXPECT_EQ(z.cols(), 0);
}

TEST(RegularizedGnOracle, ForcedSolution) {
  const Vector dw = solve_regularized_gn_oracle(2.0, Vector(Eigen::Vector2d(1, 0)));
  EXPECT_NEAR(dw[0], -2.0, 1e-14);
  EXPECT_NEAR(dw[1], 0.0, 1e-14);
}

TEST(RegularizedGnOracle, ZeroLinearizedResidual) {
  const Vector g = Vector(Eigen::Vector2d(3, 4));
  const Vector dw = solve_regularized_gn_oracle(1.0, g);
  EXPECT_NEAR(dw[0], -0.12, 1e-14);
  EXPECT_NEAR(dw[1], -0.16, 1e-14);
  EXPECT_NEAR(1.0 + g.dot(dw), 0.0, 1e-14);
}

TEST(RegularizedGnOracle, StationarityCondition) {
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    const auto m = static_cast<Index>(rng.uniform_int(2, 30));
    const Vector g = random_vector(m, rng);
    const double r = rng.normal();
    const Vector dw = solve_regularized_gn_oracle(r, g);
    const Matrix z = null_space_basis(g);
    const Vector stat = g * (r + g.dot(dw)) + z * (z.transpose() * dw);
    EXPECT_LE(stat.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SpectralRadius, DiagonalAndRotation) {
  Matrix d(2, 2);
  d << 0.5, 0, 0, -0.9;
  EXPECT_NEAR(spectral_radius(d), 0.9, 1e-9);
  Matrix rot(2, 2);
  rot << 0, -0.7, 0.7, 0;
  EXPECT_NEAR(spectral_radius(rot), 0.7, 1e-9);
  EXPECT_EQ(spectral_radius(Matrix::Zero(3, 3)), 0.0);
  EXPECT_THROW(spectral_radius(Matrix::Zero(2, 3)), DimensionMismatch);
}

TEST(Riccati, DecoupledStateGivesZeroGain) {
  const Matrix I = Matrix::Identity(2, 2);
  const auto sol = riccati_fixed_point(Matrix::Zero(2, 2), I, Matrix(-I), Matrix(-I), 0.9);
  EXPECT_LE((sol.P + I).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(sol.K_star.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Riccati, ScalarMatchesLongValueIteration) {
  const double a = 0.9, b = 1.0, q = -1.0, r = -1.0, gamma = 0.9;
  double p = 0;
  for (int it = 0; it < 1000000; ++it) {
    p = q + gamma * a * a * p - gamma * gamma * a * a * b * b * p * p / (r + gamma * b * b * p);
  }
  const double k = -gamma * b * p * a / (r + gamma * b * b * p);

  Matrix A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << a;
  B << b;
  Q << q;
  R << r;
  const auto sol = riccati_fixed_point(A, B, Q, R, gamma);
  EXPECT_NEAR(sol.P(0, 0), p, 1e-10);
  EXPECT_NEAR(sol.K_star(0, 0), k, 1e-10);
}

TEST(Riccati, ResidualAndStability) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Index ns = 3, na = 2;
    Matrix A(ns, ns), B(ns, na);
    for (Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal(0.0, 0.5);
    for (Index i = 0; i < B.size(); ++i) B.data()[i] = rng.normal();
    const Matrix Q = -Matrix::Identity(ns, ns);
    const Matrix R = -Matrix::Identity(na, na);
    const double gamma = 0.9;
    const double tol = 1e-12;
    const auto sol = riccati_fixed_point(A, B, Q, R, gamma, tol);
    const Matrix& P = sol.P;
    const Matrix inner = R + gamma * B.transpose() * P * B;
    const Matrix bpa = B.transpose() * P * A;
    const Matrix next = Q + gamma * A.transpose() * P * A -
                        gamma * gamma * bpa.transpose() * inner.inverse() * bpa;
    EXPECT_LE((next - P).cwiseAbs().maxCoeff(), 10 * tol);
    EXPECT_LT(spectral_radius(Matrix(std::sqrt(gamma) * (A + B * sol.K_star))), 1.0);
  }
}

TEST(Riccati, DimensionMismatch) {
  EXPECT_THROW(riccati_fixed_point(Matrix::Zero(2, 2), Matrix::Zero(3, 1), Matrix::Zero(2, 2),
                                   Matrix::Identity(1, 1), 0.9),
               DimensionMismatch);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42);
  EXPECT_NE(c.split(1).next_u64(), c.split(2).next_u64());
}

TEST(Rng, PinnedValues) {
  // SplitMix64 reference output for seed 0 (counter starts at 1).
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFull);
}

TEST(Rng, UniformIntFrequencies) {
  Rng rng(5);
  std::vector<long> counts(10, 0);
  const long n = 1000000;
  for (long i = 0; i < n; ++i) ++counts[rng.uniform_int(10)];
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (long c : counts) EXPECT_LE(std::abs(c - n / 10), 3 * sigma);
}

}  // namespace
}  // namespace ignd
