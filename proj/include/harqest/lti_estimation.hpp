#pragma once

// Process model, the sensor's steady-state Kalman filter and the receiver's
// error-covariance ladder Tr(f^n(P)) indexed by age of information n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "harqest/errors.hpp"
#include "harqest/numerics.hpp"

namespace harqest {

namespace detail {

inline void require_psd(const Matrix& m, const char* name) {
  if (m.rows() == 0 || m.rows() != m.cols()) throw DimensionError(std::string(name) + " must be square");
  if (!m.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw ConfigError(std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-9 * scale) {
    throw ConfigError(std::string(name) + " is not positive semidefinite");
  }
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

/// x(k+1) = A x(k) + w(k),  y(k) = C x(k) + v(k).
class LtiSystem {
 public:
  /// Validates dimensions and covariances. Sigma0 defaults to Qw.
  static LtiSystem make(Matrix A, Matrix C, Matrix Qw, Matrix Qv, std::optional<Matrix> Sigma0 = std::nullopt) {
    detail::require_square(A, "A");
    detail::require_finite(A, "A");
    const auto n = A.rows();
    if (C.cols() != n || C.rows() == 0) throw DimensionError("C must have as many columns as A");
    detail::require_finite(C, "C");
    if (Qw.rows() != n) throw DimensionError("Qw must match the state dimension");
    if (Qv.rows() != C.rows()) throw DimensionError("Qv must match the measurement dimension");
    detail::require_psd(Qw, "Qw");
    detail::require_psd(Qv, "Qv");
    Matrix sigma = Sigma0 ? std::move(*Sigma0) : Qw;
    if (sigma.rows() != n) throw DimensionError("Sigma0 must match the state dimension");
    detail::require_psd(sigma, "Sigma0");
    return LtiSystem(std::move(A), std::move(C), std::move(Qw), std::move(Qv), std::move(sigma));
  }

  const Matrix& A() const noexcept { return A_; }
  const Matrix& C() const noexcept { return C_; }
  const Matrix& Qw() const noexcept { return Qw_; }
  const Matrix& Qv() const noexcept { return Qv_; }
  const Matrix& Sigma0() const noexcept { return Sigma0_; }
  Eigen::Index state_dim() const noexcept { return A_.rows(); }

  double rho_sq() const {
    const double rho = spectral_radius(A_);
    return rho * rho;
  }

  /// Open-loop stable processes make the scheduling problem trivial; callers
  /// warn but still run.
  bool is_trivial() const { return rho_sq() <= 1.0; }

 private:
  LtiSystem(Matrix A, Matrix C, Matrix Qw, Matrix Qv, Matrix Sigma0)
      : A_(std::move(A)), C_(std::move(C)), Qw_(std::move(Qw)), Qv_(std::move(Qv)), Sigma0_(std::move(Sigma0)) {}

  Matrix A_, C_, Qw_, Qv_, Sigma0_;
};

struct SteadyStateKalman {
  Matrix P_bar0;  // posterior covariance
  Matrix K_bar;   // gain
  std::size_t iterations = 0;
};

/// f(X) = A X A' + Qw, symmetrized.
inline Matrix f_apply(const LtiSystem& sys, const Matrix& X) {
  if (X.rows() != sys.state_dim() || X.cols() != sys.state_dim()) {
    throw DimensionError("f_apply: X must be " + std::to_string(sys.state_dim()) + "x" +
                         std::to_string(sys.state_dim()));
  }
  return detail::symmetrized(sys.A() * X * sys.A().transpose() + sys.Qw());
}

/// One predict/update step of the filter covariance. Returns {posterior, gain}.
inline std::pair<Matrix, Matrix> riccati_step(const LtiSystem& sys, const Matrix& posterior) {
  const Matrix prior = f_apply(sys, posterior);
  const Matrix innovation = sys.C() * prior * sys.C().transpose() + sys.Qv();
  // K = prior C' S^-1, computed as (S^-1 C prior)'.
  const Matrix gain = innovation.ldlt().solve(sys.C() * prior).transpose();
  const auto n = sys.state_dim();
  Matrix next = (Matrix::Identity(n, n) - gain * sys.C()) * prior;
  return {detail::symmetrized(next), gain};
}

/// Iterates the filter covariance recursion from Sigma0 until successive
/// posteriors differ by less than `tol` in max-abs norm.
inline SteadyStateKalman solve_steady_state(const LtiSystem& sys, double tol = 1e-10,
                                            std::size_t max_iters = 100000) {
  Matrix p = sys.Sigma0();
  for (std::size_t it = 1; it <= max_iters; ++it) {
    auto [next, gain] = riccati_step(sys, p);
    if (!next.allFinite()) break;
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = std::move(next);
    if (change < tol) return SteadyStateKalman{p, gain, it};
  }
  throw InstabilityError("Kalman covariance recursion did not converge; the local filter is not stable",
                         max_iters);
}

/// traces[n-1] = Tr(f^n(P_bar0)) for n = 1..max_depth.
class CostLadder {
 public:
  CostLadder() = default;
  explicit CostLadder(std::vector<double> traces) : traces_(std::move(traces)) {}

  /// Cost at age n >= 1. Unchecked.
  double operator[](std::size_t n) const { return traces_[n - 1]; }
  double at(std::size_t n) const {
    if (n == 0 || n > traces_.size()) {
      throw DepthError("cost ladder queried at depth " + std::to_string(n) + " beyond " +
                           std::to_string(traces_.size()),
                       traces_.size());
    }
    return traces_[n - 1];
  }
  std::size_t max_depth() const noexcept { return traces_.size(); }
  const std::vector<double>& traces() const noexcept { return traces_; }

 private:
  std::vector<double> traces_;
};

inline constexpr double kLadderOverflowGuard = 1e300;

namespace detail {

inline std::vector<double> ladder_traces(const LtiSystem& sys, const SteadyStateKalman& kal, std::size_t max_depth,
                                         double guard) {
  std::vector<double> traces;
  traces.reserve(max_depth);
  Matrix cov = kal.P_bar0;
  for (std::size_t n = 1; n <= max_depth; ++n) {
    cov = f_apply(sys, cov);
    const double tr = cov.trace();
    if (!std::isfinite(tr) || tr > guard || !cov.allFinite()) break;
    traces.push_back(tr);
  }
  return traces;
}

}  // namespace detail

inline CostLadder build_cost_ladder(const LtiSystem& sys, const SteadyStateKalman& kal, std::size_t max_depth) {
  if (max_depth == 0) throw UsageError("build_cost_ladder: max_depth must be at least 1");
  auto traces = detail::ladder_traces(sys, kal, max_depth, kLadderOverflowGuard);
  if (traces.size() < max_depth) {
    throw DepthError("cost ladder overflows beyond depth " + std::to_string(traces.size()), traces.size());
  }
  return CostLadder(std::move(traces));
}

/// Like build_cost_ladder but stops quietly once a trace would exceed `guard`;
/// the returned ladder may be shorter than requested.
inline CostLadder build_cost_ladder_guarded(const LtiSystem& sys, const SteadyStateKalman& kal,
                                            std::size_t max_depth, double guard) {
  return CostLadder(detail::ladder_traces(sys, kal, max_depth, guard));
}

}  // namespace harqest
