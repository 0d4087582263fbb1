#pragma once

// Dense linear-algebra helpers and the brute-force oracles that the analytic
// fast paths are checked against.

#include <cmath>
#include <limits>
#include <utility>

#include "ignd/errors.hpp"
#include "ignd/types.hpp"

namespace ignd {

/// Orthonormal basis Z (m x m-1) of the null space of g^T.
///
/// Gram-Schmidt against g/|g| over the standard basis, skipping the coordinate
/// where |g| is largest so no candidate is nearly parallel to g. Every vector
/// gets a second orthogonalization pass.
template <typename Derived>
MatrixX<typename Derived::Scalar> null_space_basis(const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  const Index m = g.size();
  if (m < 1) throw DimensionMismatch("null_space_basis: empty vector");
  const Scalar norm = g.norm();
  if (!(norm > Scalar(0))) throw ZeroGradient();

  Index pivot = 0;
  g.cwiseAbs().maxCoeff(&pivot);
  const VectorX<Scalar> u = g / norm;

  MatrixX<Scalar> z(m, m - 1);
  Index col = 0;
  for (Index i = 0; i < m; ++i) {
    if (i == pivot) continue;
    VectorX<Scalar> v = VectorX<Scalar>::Unit(m, i);
    for (int pass = 0; pass < 2; ++pass) {
      v -= u * u.dot(v);
      for (Index k = 0; k < col; ++k) v -= z.col(k) * z.col(k).dot(v);
    }
    z.col(col++) = v / v.norm();
  }
  return z;
}

/// Dense solve of  min_dw 1/2 (r + g^T dw)^2 + 1/2 |Z^T dw|^2  through its
/// normal equations (g g^T + Z Z^T) dw = -g r. Used only as an oracle for the
/// closed-form incremental Gauss-Newton step.
template <typename Derived>
VectorX<typename Derived::Scalar> solve_regularized_gn_oracle(typename Derived::Scalar r,
                                                              const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> z = null_space_basis(g);
  const VectorX<Scalar> gv = g;
  const MatrixX<Scalar> h = gv * gv.transpose() + z * z.transpose();
  const VectorX<Scalar> rhs = -gv * r;
  return h.fullPivLu().solve(rhs);
}

/// Spectral radius via Gelfand's formula rho = lim |F^k|^(1/k), evaluated on
/// repeated squares with the norm factored out in log space.
template <typename Derived>
typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived>& f, int squarings = 48) {
  using Scalar = typename Derived::Scalar;
  if (f.rows() != f.cols()) throw DimensionMismatch("spectral_radius: matrix not square");
  MatrixX<Scalar> n = f;
  Scalar log_scale = 0;  // F^(2^k) = exp(log_scale) * n
  Scalar power = 1;      // 2^k
  for (int k = 0; k <= squarings; ++k) {
    const Scalar c = n.norm();
    if (!(c > Scalar(0))) return Scalar(0);
    n /= c;
    log_scale += std::log(c);
    if (k == squarings) break;
    n = (n * n).eval();
    log_scale *= 2;
    power *= 2;
  }
  return std::exp(log_scale / power);
}

template <typename Scalar>
struct RiccatiSolution {
  MatrixX<Scalar> P;       // value matrix, v(s) = s^T P s (+ const)
  MatrixX<Scalar> K_star;  // optimal gain, a = K* s
  int iterations = 0;
};

/// Discounted Riccati value recursion
///   P <- Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA
/// from P = 0 until |P_{k+1} - P_k|_inf <= tol. Rewards are r = s'Qs + a'Ra
/// with Q <= 0, R < 0, so P comes out negative semi-definite.
template <typename DA, typename DB, typename DQ, typename DR>
RiccatiSolution<typename DA::Scalar> riccati_fixed_point(const Eigen::MatrixBase<DA>& A,
                                                         const Eigen::MatrixBase<DB>& B,
                                                         const Eigen::MatrixBase<DQ>& Q,
                                                         const Eigen::MatrixBase<DR>& R,
                                                         typename DA::Scalar gamma,
                                                         typename DA::Scalar tol = 1e-12,
                                                         int max_iter = 100000) {
  using Scalar = typename DA::Scalar;
  const Index ns = A.rows();
  const Index na = B.cols();
  if (A.cols() != ns || B.rows() != ns || Q.rows() != ns || Q.cols() != ns || R.rows() != na ||
      R.cols() != na) {
    throw DimensionMismatch("riccati_fixed_point: inconsistent system dimensions");
  }

  auto inner_solve = [&](const MatrixX<Scalar>& P, const MatrixX<Scalar>& rhs) {
    const MatrixX<Scalar> inner = R + gamma * B.transpose() * P * B;
    Eigen::FullPivLU<MatrixX<Scalar>> lu(inner);
    if (!lu.isInvertible()) throw SingularInnerMatrix("R + gamma B'PB is singular");
    return MatrixX<Scalar>(lu.solve(rhs));
  };

  RiccatiSolution<Scalar> out;
  MatrixX<Scalar> P = MatrixX<Scalar>::Zero(ns, ns);
  for (int it = 1; it <= max_iter; ++it) {
    const MatrixX<Scalar> bpa = B.transpose() * P * A;
    MatrixX<Scalar> next = Q + gamma * A.transpose() * P * A -
                           gamma * gamma * bpa.transpose() * inner_solve(P, bpa);
    next = (Scalar(0.5) * (next + next.transpose())).eval();
    if (!next.allFinite()) throw NoConvergence("Riccati recursion produced non-finite values");
    const Scalar change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tol) {
      out.iterations = it;
      out.K_star = -inner_solve(P, gamma * B.transpose() * P * A);
      out.P = std::move(P);
      return out;
    }
  }
  throw NoConvergence("Riccati recursion did not converge within max_iter");
}

}  // namespace ignd
