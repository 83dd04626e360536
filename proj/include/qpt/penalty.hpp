/// Monte-Carlo estimation of a lower bound for the penalty coefficient M of
/// a constrained QUBO. Samples assignments uniformly, anchors on the most
/// feasible sample x_from (smallest ||Ax-b||^2), and for every sample with
/// strictly lower objective energy but strictly larger residual derives the
/// coefficient that would make x_from preferable; the bound is the largest
/// such coefficient.

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qpt/encoding.hpp"
#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"

namespace qpt {

struct ConstraintSpec {
  Eigen::MatrixXd a;  // rows x num_vars
  Eigen::VectorXd b;  // length rows

  void check_against(const QuboModel& model) const {
    if (static_cast<std::size_t>(a.cols()) != model.num_vars())
      throw DimensionError("ConstraintSpec: column count " + std::to_string(a.cols()) +
                           " != model variables " + std::to_string(model.num_vars()));
    if (a.rows() != b.size())
      throw DimensionError("ConstraintSpec: row count mismatch with rhs");
  }
};

/// Squared Euclidean residual ||A x - b||^2.
inline double residual_sq(const ConstraintSpec& c, const BinaryAssignment& x) {
  Eigen::VectorXd xv(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) xv[static_cast<Eigen::Index>(i)] = x[i];
  return (c.a * xv - c.b).squaredNorm();
}

/// Objective energy plus M times the squared constraint residual.
inline double penalized_energy(const QuboModel& h, const ConstraintSpec& c, double m,
                               const BinaryAssignment& x) {
  return evaluate(h, x) + m * residual_sq(c, x);
}

/// N uniform assignments with independent bits, deterministic per seed;
/// duplicates permitted.
inline std::vector<BinaryAssignment> sample_assignments(std::size_t num_vars,
                                                        std::size_t n_samples,
                                                        std::uint64_t seed) {
  if (num_vars == 0)
    throw std::invalid_argument("sample_assignments: num_vars must be >= 1");
  if (n_samples == 0)
    throw std::invalid_argument("sample_assignments: need at least one sample");
  auto gen = rng::make_engine(seed);
  std::vector<BinaryAssignment> out;
  out.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s)
    out.push_back(rng::random_assignment(num_vars, gen));
  return out;
}

/// Default sample count: 10 * 2^min(num_vars, 14), capped at 100000.
inline std::size_t default_num_samples(std::size_t num_vars) {
  const std::size_t exp = std::min<std::size_t>(num_vars, 14);
  return std::min<std::size_t>(10ull << exp, 100000);
}

struct PenaltyCandidate {
  BinaryAssignment x_to;
  double value = 0.0;        // (E_from - E_to) / denominator
  double denominator = 0.0;  // residual_sq(x_to) - residual_sq(x_from), > 0
};

struct PenaltyEstimate {
  bool bound_derived = false;  // false => no usable candidate; caller falls back
  double m_lower = 0.0;        // meaningful only when bound_derived
  BinaryAssignment x_from;
  double energy_from = 0.0;
  double residual_from = 0.0;
  std::vector<PenaltyCandidate> candidates;       // retained (denominator > 0)
  std::vector<BinaryAssignment> lower_energy_set; // all samples with E < E_from
  std::size_t num_candidates = 0;
  std::size_t samples_drawn = 0;
  std::uint64_t seed = 0;
};

/// Core of the estimator over an explicit sample set (tests inject exhaustive
/// enumerations here; the seeded overload below draws the set).
inline PenaltyEstimate estimate_penalty_from_samples(
    const QuboModel& h, const ConstraintSpec& c,
    const std::vector<BinaryAssignment>& samples) {
  c.check_against(h);
  if (samples.size() < 2)
    throw std::invalid_argument("estimate_penalty: need at least 2 samples");

  PenaltyEstimate est;
  est.samples_drawn = samples.size();

  std::vector<double> residuals(samples.size());
  std::size_t from = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    residuals[s] = residual_sq(c, samples[s]);
    if (s == 0) continue;
    if (residuals[s] < residuals[from] ||
        (residuals[s] == residuals[from] && samples[s] < samples[from]))
      from = s;  // ties resolve to the lexicographically smallest bit string
  }
  est.x_from = samples[from];
  est.residual_from = residuals[from];
  est.energy_from = evaluate(h, est.x_from);

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const double energy = evaluate(h, samples[s]);
    if (!(est.energy_from > energy)) continue;  // strict: ties excluded
    est.lower_energy_set.push_back(samples[s]);
    const double denom = residuals[s] - est.residual_from;
    if (!(denom > 0.0)) continue;  // an equally/more feasible improver: skip
    const double value = (est.energy_from - energy) / denom;
    est.candidates.push_back({samples[s], value, denom});
    if (!est.bound_derived || value > est.m_lower) {
      est.bound_derived = true;
      est.m_lower = value;
    }
  }
  est.num_candidates = est.candidates.size();
  return est;
}

/// Seeded estimator: draws `n_samples` uniform assignments and derives the
/// bound; deterministic given (h, c, n_samples, seed).
inline PenaltyEstimate estimate_penalty(const QuboModel& h, const ConstraintSpec& c,
                                        std::size_t n_samples, std::uint64_t seed) {
  auto est = estimate_penalty_from_samples(
      h, c, sample_assignments(h.num_vars(), n_samples, seed));
  est.seed = seed;
  return est;
}

/// Return-target constraint r'w = R for the selection encoding (one variable
/// per asset): A[0,i] = r_i, b = [R].
inline ConstraintSpec selection_return_constraint(const MomentEstimates& moments,
                                                  double target_return) {
  ConstraintSpec c;
  const auto n = static_cast<Eigen::Index>(moments.size());
  c.a.resize(1, n);
  for (Eigen::Index i = 0; i < n; ++i) c.a(0, i) = moments.expected_returns[i];
  c.b.resize(1);
  c.b[0] = target_return;
  return c;
}

/// Return-target constraint for the fractional encoding: A[0,(i,k)] = r_i *
/// 2^(k-K), so ||Ax - b||^2 = (r'w(x) - R)^2.
inline ConstraintSpec fractional_return_constraint(const MomentEstimates& moments,
                                                   const EncodingParams& params) {
  ConstraintSpec c;
  const std::size_t n = moments.size();
  const auto cols = static_cast<Eigen::Index>(n * static_cast<std::size_t>(params.k));
  c.a.resize(1, cols);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < params.k; ++k)
      c.a(0, static_cast<Eigen::Index>(fractional_index(i, k, params.k))) =
          moments.expected_returns[static_cast<Eigen::Index>(i)] *
          bit_weight(k, params.k);
  c.b.resize(1);
  c.b[0] = params.target_return;
  return c;
}

}  // namespace qpt
