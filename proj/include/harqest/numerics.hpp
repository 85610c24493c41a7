#pragma once

// Small dense linear-algebra helpers. Matrices here are tiny (at most a few
// hundred rows), so everything is dense and allocation is not a concern.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "harqest/errors.hpp"

namespace harqest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

inline void require_square(const Matrix& m, const char* op) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    throw DimensionError(std::string(op) + ": expected a nonempty square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw DimensionError(std::string(op) + ": matrix has non-finite entries");
}

// Strong connectivity of the directed graph {j -> i : m(i, j) > 0}.
inline bool strongly_connected(const Matrix& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const auto j = stack.back();
      stack.pop_back();
      for (std::size_t i = 0; i < n; ++i) {
        const double w = transpose ? m(j, i) : m(i, j);
        if (w > 0.0 && !seen[i]) {
          seen[i] = 1;
          stack.push_back(i);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reaches_all(false) && reaches_all(true);
}

}  // namespace detail

/// Largest eigenvalue modulus. Eigen's real Schur (Hessenberg + shifted QR)
/// does the work.
inline double spectral_radius(const Matrix& m) {
  detail::require_square(m, "spectral_radius");
  detail::require_finite(m, "spectral_radius");
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw ModelError("spectral_radius: eigenvalue iteration failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Upper tail of the standard normal, Q(x) = P[N(0,1) > x].
inline double gaussian_q(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// True when every entry is nonnegative and every column sums to one.
inline bool is_column_stochastic(const Matrix& p, double tol) {
  if (p.rows() == 0 || p.rows() != p.cols() || !p.allFinite()) return false;
  if (p.minCoeff() < -tol) return false;
  const Vector sums = p.colwise().sum().transpose();
  return (sums.array() - 1.0).abs().maxCoeff() <= tol;
}

/// Stationary distribution e of a column-stochastic, irreducible matrix:
/// p e = e, e >= 0, sum(e) = 1. Solves the balance equations with one row
/// replaced by the normalization constraint.
inline Vector stationary_distribution(const Matrix& p) {
  detail::require_square(p, "stationary_distribution");
  if (!is_column_stochastic(p, 1e-9)) {
    throw ModelError("stationary_distribution: matrix is not column-stochastic");
  }
  if (!detail::strongly_connected(p)) {
    throw ModelError("stationary_distribution: chain is reducible");
  }
  const Eigen::Index n = p.rows();
  Matrix system = p - Matrix::Identity(n, n);
  system.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector e = system.fullPivLu().solve(rhs);
  e = e.cwiseMax(0.0);
  e /= e.sum();
  if ((p * e - e).cwiseAbs().maxCoeff() > 1e-10) {
    throw ModelError("stationary_distribution: balance residual above 1e-10");
  }
  return e;
}

/// Generator of the one-dimensional null space of m, scaled to unit 1-norm
/// with nonnegative entries.
inline Vector null_space_vector(const Matrix& m) {
  detail::require_square(m, "null_space_vector");
  detail::require_finite(m, "null_space_vector");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double cutoff = 1e-10 * std::max(1.0, sv(0));
  const auto deficiency = (sv.array() <= cutoff).count();
  if (deficiency != 1) {
    throw DegenerateModelError("null_space_vector: rank deficiency is " + std::to_string(deficiency) +
                               ", expected 1");
  }
  Vector v = svd.matrixV().col(m.cols() - 1);
  if (v.sum() < 0.0) v = -v;
  const double scale = v.cwiseAbs().maxCoeff();
  if (v.minCoeff() < -1e-9 * scale) {
    throw DegenerateModelError("null_space_vector: null space has no nonnegative generator");
  }
  v = v.cwiseMax(0.0);
  v /= v.sum();
  if ((m * v).cwiseAbs().maxCoeff() > 1e-8 * v.cwiseAbs().maxCoeff()) {
    throw DegenerateModelError("null_space_vector: residual above tolerance");
  }
  return v;
}

}  // namespace harqest
