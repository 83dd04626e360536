/// Mapping of mean-variance portfolio selection onto QUBO form, in two
/// flavors: a binary asset-selection model (one variable per asset) and a
/// fractional-weight model where each asset's weight is a K-bit binary
/// expansion w_i = sum_{k=1..K} 2^{k-1-K} x_{i,k}. Both carry the risk term
/// theta * w'Cov w plus a quadratic return-target penalty
/// penalty_sign * M * (r'w - R)^2 whose constant M*R^2 is dropped from the
/// model and returned separately for exact accounting.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpt/market_data.hpp"
#include "qpt/qubo.hpp"

namespace qpt {

struct EncodingParams {
  int k = 10;                 // bits per asset (weight resolution 2^-k)
  double theta = 1.0;         // risk-term scaling
  double m = 1.0;             // penalty coefficient
  double target_return = 0.0; // return lower bound R
  int penalty_sign = +1;      // +1 standard penalty; -1 mirrors the subtracted form

  /// Boundary validation (CLI/config). Library builders additionally accept
  /// m == 0 so tests and the penalty estimator can form the bare risk term.
  void validate() const {
    if (k < 1) throw std::invalid_argument("EncodingParams: k must be >= 1");
    if (!(theta > 0.0)) throw std::invalid_argument("EncodingParams: theta must be > 0");
    if (!(m > 0.0)) throw std::invalid_argument("EncodingParams: m must be > 0");
    if (penalty_sign != 1 && penalty_sign != -1)
      throw std::invalid_argument("EncodingParams: penalty_sign must be +1 or -1");
  }
};

inline constexpr std::size_t kDefaultVariableBudget = 4096;

/// A built model plus the constant term dropped from it; energy(model, x) +
/// dropped_constant reproduces the full objective value.
struct EncodedQubo {
  QuboModel model;
  double dropped_constant = 0.0;
};

/// Binary selection model over n one-bit variables:
///   theta * sum_ij Cov(i,j) x_i x_j + penalty_sign * M * (sum_i r_i x_i - R)^2.
inline EncodedQubo build_selection_qubo(const MomentEstimates& moments,
                                        const EncodingParams& params) {
  const std::size_t n = moments.size();
  if (n == 0) throw std::invalid_argument("build_selection_qubo: empty universe");
  const double sm = params.penalty_sign * params.m;
  const double R = params.target_return;
  EncodedQubo out{QuboModel(n), sm * R * R};
  for (std::size_t i = 0; i < n; ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    const double ri = moments.expected_returns[ei];
    out.model.add_linear(i, params.theta * moments.covariance(ei, ei) +
                                sm * (ri * ri - 2.0 * R * ri));
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto ej = static_cast<Eigen::Index>(j);
      out.model.add_quad(i, j, params.theta * moments.covariance(ei, ej) +
                                   sm * ri * moments.expected_returns[ej]);
    }
  }
  return out;
}

/// Weight of the k-th bit (0-based within the asset's block): 2^(k+1-1-K).
inline double bit_weight(int bit_index, int k_bits) {
  return std::ldexp(1.0, bit_index - k_bits);
}

/// Flat variable index of asset i's bit k (0-based bit within the block).
inline std::size_t fractional_index(std::size_t asset, int bit_index, int k_bits) {
  return asset * static_cast<std::size_t>(k_bits) + static_cast<std::size_t>(bit_index);
}

/// Fractional-weight model over n*K variables; substituting the binary
/// expansion into the selection objective gives, for variables u=(i,k),
/// v=(j,l): coefficient (theta*Cov(i,j) + sM*r_i*r_j) * c_k * c_l, plus the
/// linear part -2*sM*R*r_i*c_k, with u==v terms folded into linear.
inline EncodedQubo build_fractional_qubo(
    const MomentEstimates& moments, const EncodingParams& params,
    std::size_t variable_budget = kDefaultVariableBudget) {
  const std::size_t n = moments.size();
  if (n == 0) throw std::invalid_argument("build_fractional_qubo: empty universe");
  const std::size_t num_vars = n * static_cast<std::size_t>(params.k);
  if (num_vars > variable_budget)
    throw SizeLimitError("build_fractional_qubo: " + std::to_string(num_vars) +
                         " variables exceeds budget " + std::to_string(variable_budget));
  const double sm = params.penalty_sign * params.m;
  const double R = params.target_return;
  EncodedQubo out{QuboModel(num_vars), sm * R * R};
  for (std::size_t u = 0; u < num_vars; ++u) {
    const std::size_t i = u / static_cast<std::size_t>(params.k);
    const int k = static_cast<int>(u % static_cast<std::size_t>(params.k));
    const auto ei = static_cast<Eigen::Index>(i);
    const double ri = moments.expected_returns[ei];
    const double cu = bit_weight(k, params.k);
    out.model.add_linear(
        u, (params.theta * moments.covariance(ei, ei) + sm * ri * ri) * cu * cu -
               2.0 * sm * R * ri * cu);
    for (std::size_t v = u + 1; v < num_vars; ++v) {
      const std::size_t j = v / static_cast<std::size_t>(params.k);
      const int l = static_cast<int>(v % static_cast<std::size_t>(params.k));
      const auto ej = static_cast<Eigen::Index>(j);
      const double cv = bit_weight(l, params.k);
      out.model.add_quad(u, v,
                         (params.theta * moments.covariance(ei, ej) +
                          sm * ri * moments.expected_returns[ej]) *
                             cu * cv);
    }
  }
  return out;
}

struct PortfolioSolution {
  std::vector<double> raw_weights;         // multiples of 2^-K in [0, 1 - 2^-K]
  std::vector<double> normalized_weights;  // raw / sum(raw); zeros when all_zero
  bool all_zero = false;
  double expected_return = 0.0;  // on normalized weights (reporting convention)
  double variance = 0.0;
  double energy = 0.0;
  BinaryAssignment assignment;
};

/// Portfolio return r'w and variance w'Cov w.
inline std::pair<double, double> portfolio_metrics(const std::vector<double>& weights,
                                                   const MomentEstimates& moments) {
  const std::size_t n = moments.size();
  if (weights.size() != n)
    throw DimensionError("portfolio_metrics: weight length " +
                         std::to_string(weights.size()) + " != " + std::to_string(n));
  double ret = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    ret += weights[i] * moments.expected_returns[ei];
    for (std::size_t j = 0; j < n; ++j)
      var += weights[i] * weights[j] *
             moments.covariance(ei, static_cast<Eigen::Index>(j));
  }
  return {ret, var};
}

/// Expands an n*K-bit assignment back into weights and reporting metrics.
/// Raw weights are exact sums of distinct powers of two; metrics are computed
/// on the normalized weights, or reported as zero for the all-zero portfolio.
inline PortfolioSolution decode(const BinaryAssignment& assignment,
                                const MomentEstimates& moments,
                                const EncodingParams& params, double energy = 0.0) {
  const std::size_t n = moments.size();
  if (assignment.size() != n * static_cast<std::size_t>(params.k))
    throw DimensionError("decode: assignment length " +
                         std::to_string(assignment.size()) + " != n*K = " +
                         std::to_string(n * static_cast<std::size_t>(params.k)));
  PortfolioSolution sol;
  sol.assignment = assignment;
  sol.energy = energy;
  sol.raw_weights.assign(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < params.k; ++k)
      if (assignment[fractional_index(i, k, params.k)])
        sol.raw_weights[i] += bit_weight(k, params.k);
    total += sol.raw_weights[i];
  }
  sol.normalized_weights.assign(n, 0.0);
  if (total > 0.0) {
    for (std::size_t i = 0; i < n; ++i) sol.normalized_weights[i] = sol.raw_weights[i] / total;
    auto [ret, var] = portfolio_metrics(sol.normalized_weights, moments);
    sol.expected_return = ret;
    sol.variance = var;
  } else {
    sol.all_zero = true;
  }
  return sol;
}

/// Full objective value at explicit weights: theta * w'Cov w +
/// penalty_sign * M * (r'w - R)^2. The formula the QUBO expansions must match.
inline double objective_value(const std::vector<double>& weights,
                              const MomentEstimates& moments,
                              const EncodingParams& params) {
  auto [ret, var] = portfolio_metrics(weights, moments);
  const double viol = ret - params.target_return;
  return params.theta * var + params.penalty_sign * params.m * viol * viol;
}

}  // namespace qpt
