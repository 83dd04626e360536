/// Continuous mean-variance reference solver: minimum-variance portfolios at
/// a target return under full-investment, return-floor and long-only
/// constraints, traced across the achievable range into an efficient
/// frontier, plus the relative-variance error metric used to score binary
/// solutions against that frontier.
///
///   minimize   w' Cov w
///   subject to sum(w) = 1,  r'w >= R,  w >= 0
///
/// Solved with a primal active-set method. Equality-constrained subproblems
/// go through a KKT system factored with a complete orthogonal
/// decomposition, so rank-deficient covariances (identical assets) get the
/// deterministic minimum-norm solution instead of an error.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpt/encoding.hpp"
#include "qpt/market_data.hpp"

namespace qpt {

struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FrontierPoint {
  double target_return = 0.0;
  std::vector<double> weights;  // >= 0, sums to 1
  double variance = 0.0;
};

struct FrontierTrace {
  std::vector<FrontierPoint> points;  // ordered by target_return
  double r_min = 0.0;  // return of the global minimum-variance portfolio
  double r_max = 0.0;  // best single-asset return
};

namespace detail {

/// Equality-constrained QP minimizer over the simplex face selected by a
/// working set of zero bounds. `c_rows`/`c_rhs` hold the fixed equality rows
/// (always the ones row; optionally the return row). Starts from a feasible
/// `w` and iterates KKT solves with ratio steps until the working set is
/// optimal. Returns the final iterate.
inline Eigen::VectorXd active_set_min_variance(const Eigen::MatrixXd& cov,
                                               const Eigen::MatrixXd& c_rows,
                                               const Eigen::VectorXd& c_rhs,
                                               Eigen::VectorXd w, double tol) {
  const Eigen::Index n = cov.rows();
  const Eigen::Index m = c_rows.rows();
  std::vector<bool> at_bound(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] < 0.0) w[i] = 0.0;
    at_bound[static_cast<std::size_t>(i)] = (w[i] == 0.0);
  }

  const std::size_t max_iters = 100 + 20 * static_cast<std::size_t>(n);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    std::vector<Eigen::Index> free_vars;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!at_bound[static_cast<std::size_t>(i)]) free_vars.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free_vars.size());

    // KKT system on the free variables:
    //   [2 Cov_FF  C_F'][w_F]   [0]
    //   [C_F       0   ][ u ] = [d],  multipliers lambda = -u.
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + m, nf + m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + m);
    for (Eigen::Index a = 0; a < nf; ++a)
      for (Eigen::Index b = 0; b < nf; ++b)
        kkt(a, b) = 2.0 * cov(free_vars[static_cast<std::size_t>(a)],
                              free_vars[static_cast<std::size_t>(b)]);
    for (Eigen::Index row = 0; row < m; ++row)
      for (Eigen::Index a = 0; a < nf; ++a) {
        kkt(nf + row, a) = c_rows(row, free_vars[static_cast<std::size_t>(a)]);
        kkt(a, nf + row) = kkt(nf + row, a);
      }
    rhs.tail(m) = c_rhs;
    const Eigen::VectorXd sol =
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(kkt).solve(rhs);

    Eigen::VectorXd w_star = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < nf; ++a)
      w_star[free_vars[static_cast<std::size_t>(a)]] = sol[a];
    const Eigen::VectorXd lambda = -sol.tail(m);

    const Eigen::VectorXd p = w_star - w;
    if (p.cwiseAbs().maxCoeff() <= 1e-13) {
      // Stationary on this face: check bound multipliers
      // mu_i = grad_i - C_i' lambda and release the most negative one.
      const Eigen::VectorXd grad = 2.0 * (cov * w);
      Eigen::Index release = -1;
      double most_negative = -std::max(tol, 1e-12);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!at_bound[static_cast<std::size_t>(i)]) continue;
        double mu = grad[i];
        for (Eigen::Index row = 0; row < m; ++row) mu -= c_rows(row, i) * lambda[row];
        if (mu < most_negative) {
          most_negative = mu;
          release = i;
        }
      }
      if (release < 0) return w;  // KKT-optimal
      at_bound[static_cast<std::size_t>(release)] = false;
      continue;
    }

    // Ratio test: largest step along p keeping the free weights non-negative.
    double alpha = 1.0;
    Eigen::Index blocker = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (at_bound[static_cast<std::size_t>(i)] || p[i] >= -1e-15) continue;
      const double cand = w[i] / -p[i];
      if (cand < alpha) {
        alpha = cand;
        blocker = i;
      }
    }
    w += alpha * p;
    if (blocker >= 0) {
      w[blocker] = 0.0;
      at_bound[static_cast<std::size_t>(blocker)] = true;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      if (w[i] < 0.0) w[i] = 0.0;  // scrub arithmetic dust
  }
  throw std::runtime_error("active_set_min_variance: iteration limit reached");
}

inline FrontierPoint make_point(const Eigen::VectorXd& w, double target,
                                const Eigen::MatrixXd& cov) {
  FrontierPoint pt;
  pt.target_return = target;
  pt.weights.assign(w.data(), w.data() + w.size());
  pt.variance = w.dot(cov * w);
  if (pt.variance < 0.0) pt.variance = 0.0;  // PSD dust
  return pt;
}

}  // namespace detail

/// Global minimum-variance portfolio (no return floor).
inline FrontierPoint global_min_variance(const MomentEstimates& moments,
                                         double tol = 1e-9) {
  const auto n = static_cast<Eigen::Index>(moments.size());
  Eigen::MatrixXd ones(1, n);
  ones.setOnes();
  Eigen::VectorXd rhs(1);
  rhs << 1.0;
  const Eigen::VectorXd start = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Eigen::VectorXd w =
      detail::active_set_min_variance(moments.covariance, ones, rhs, start, tol);
  auto pt = detail::make_point(w, 0.0, moments.covariance);
  pt.target_return = moments.expected_returns.dot(w);
  return pt;
}

/// Minimum-variance portfolio subject to the return floor r'w >= R.
inline FrontierPoint min_variance_at_return(const MomentEstimates& moments, double R,
                                            double tol = 1e-9) {
  const auto n = static_cast<Eigen::Index>(moments.size());
  const double r_hi = moments.expected_returns.maxCoeff();
  // A floor below every asset return is slack, never infeasible; only a
  // floor above the best single asset cannot be met.
  if (R > r_hi + 1e-12)
    throw InfeasibleError("target return " + std::to_string(R) +
                          " exceeds best achievable return " + std::to_string(r_hi));

  // Phase 1: ignore the return floor. If the global minimum-variance
  // portfolio already clears R, it is optimal for the floored problem too.
  auto unconstrained = global_min_variance(moments, tol);
  if (unconstrained.target_return >= R - 1e-12) {
    unconstrained.target_return = R;
    return unconstrained;
  }

  // Phase 2: the floor binds, so solve with r'w = R as an equality. A
  // feasible start blends the phase-1 portfolio toward the best returner.
  Eigen::Index top = 0;
  moments.expected_returns.maxCoeff(&top);
  Eigen::VectorXd w1(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w1[i] = unconstrained.weights[static_cast<std::size_t>(i)];
  const double ret1 = moments.expected_returns.dot(w1);
  const double t = std::clamp((R - ret1) / (r_hi - ret1), 0.0, 1.0);
  Eigen::VectorXd start = (1.0 - t) * w1;
  start[top] += t;

  Eigen::MatrixXd rows(2, n);
  rows.row(0).setOnes();
  rows.row(1) = moments.expected_returns.transpose();
  Eigen::VectorXd rhs(2);
  rhs << 1.0, R;
  const Eigen::VectorXd w =
      detail::active_set_min_variance(moments.covariance, rows, rhs, start, tol);
  return detail::make_point(w, R, moments.covariance);
}

/// Frontier from the minimum-variance return up to the best single-asset
/// return, with evenly spaced targets.
inline FrontierTrace trace_frontier(const MomentEstimates& moments,
                                    std::size_t num_points, double tol = 1e-9) {
  if (num_points < 2)
    throw std::invalid_argument("trace_frontier: need at least 2 points");
  FrontierTrace trace;
  trace.r_min = global_min_variance(moments, tol).target_return;
  trace.r_max = moments.expected_returns.maxCoeff();
  for (std::size_t s = 0; s < num_points; ++s) {
    const double frac =
        static_cast<double>(s) / static_cast<double>(num_points - 1);
    const double target = trace.r_min + frac * (trace.r_max - trace.r_min);
    trace.points.push_back(min_variance_at_return(moments, target, tol));
  }
  return trace;
}

struct FrontierErrorResult {
  double value = 0.0;
  bool out_of_range = false;  // solution return above the traced range
};

/// Relative variance excess over the frontier at the solution's return,
/// (var_solution - var_frontier) / var_frontier. Frontier variance is
/// linearly interpolated between trace points; returns below the traced
/// range use the first point's variance (the frontier is exactly flat
/// there), returns above it are clamped to the last point and flagged.
inline FrontierErrorResult frontier_error(const PortfolioSolution& solution,
                                          const FrontierTrace& trace) {
  if (trace.points.empty())
    throw std::invalid_argument("frontier_error: empty trace");
  const double ret = solution.expected_return;
  const auto& pts = trace.points;

  double frontier_var;
  FrontierErrorResult result;
  if (ret <= pts.front().target_return) {
    frontier_var = pts.front().variance;
  } else if (ret >= pts.back().target_return) {
    frontier_var = pts.back().variance;
    result.out_of_range = ret > pts.back().target_return + 1e-12;
  } else {
    std::size_t hi = 1;
    while (pts[hi].target_return < ret) ++hi;
    const auto& a = pts[hi - 1];
    const auto& b = pts[hi];
    const double span = b.target_return - a.target_return;
    frontier_var = span <= 0.0
                       ? a.variance
                       : a.variance +
                             (b.variance - a.variance) * (ret - a.target_return) / span;
  }
  if (frontier_var <= 0.0) {
    result.value = solution.variance <= 0.0
                       ? 0.0
                       : std::numeric_limits<double>::infinity();
  } else {
    result.value = (solution.variance - frontier_var) / frontier_var;
  }
  return result;
}

/// Error against the exact frontier value at the solution's return (a fresh
/// QP solve instead of interpolation); used where interpolation slack would
/// blur a dominance check.
inline FrontierErrorResult exact_frontier_error(const PortfolioSolution& solution,
                                                const MomentEstimates& moments,
                                                double tol = 1e-9) {
  const double ret = solution.expected_return;
  const double r_hi = moments.expected_returns.maxCoeff();
  FrontierErrorResult result;
  double frontier_var;
  if (ret >= r_hi) {
    frontier_var = min_variance_at_return(moments, r_hi, tol).variance;
    result.out_of_range = ret > r_hi + 1e-12;
  } else {
    frontier_var = min_variance_at_return(moments, ret, tol).variance;
  }
  if (frontier_var <= 0.0) {
    result.value = solution.variance <= 0.0
                       ? 0.0
                       : std::numeric_limits<double>::infinity();
  } else {
    result.value = (solution.variance - frontier_var) / frontier_var;
  }
  return result;
}

}  // namespace qpt
