/// Two-stage search: a binary asset-selection QUBO is solved first, and the
/// selected assets' bit blocks in the fractional model receive an extra
/// quadratic penalty P_e = 1 - sum_k x_{e,k} + sum_{k<k'} x_{e,k} x_{e,k'}
/// (zero when exactly one or two bits are set, positive otherwise), each
/// weighted by a seeded random factor in (0, 0.5] times M. The adjusted
/// model is solved against the unadjusted one and wall times are compared.

#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpt/annealer.hpp"
#include "qpt/encoding.hpp"
#include "qpt/frontier.hpp"
#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"

namespace qpt {

/// Seeded draw of a target return, uniform over the achievable range (from
/// the global minimum-variance portfolio's return up to the best single
/// asset's). The pipeline otherwise treats R as an explicit input.
inline double random_target_return(const MomentEstimates& moments,
                                   std::uint64_t seed) {
  const double r_lo = global_min_variance(moments).target_return;
  const double r_hi = moments.expected_returns.maxCoeff();
  auto gen = rng::make_engine(seed);
  return r_lo + (r_hi - r_lo) * rng::uniform01(gen);
}

struct StageOneResult {
  std::vector<std::size_t> selected_assets;  // indices set to 1 in `assignment`
  BinaryAssignment assignment;
  double energy = 0.0;
  bool empty_selection = false;  // all-zero best: stage two runs unadjusted
};

/// Seed streams for the pipeline's independent random draws.
namespace two_stage_streams {
inline constexpr std::uint64_t kStageOne = 1;
inline constexpr std::uint64_t kFactors = 2;
inline constexpr std::uint64_t kStageTwo = 3;
}  // namespace two_stage_streams

/// Solves the selection model and reads the chosen asset set off the best
/// assignment.
inline StageOneResult stage_one(const MomentEstimates& moments,
                                const EncodingParams& params,
                                const AnnealSchedule& schedule) {
  const auto built = build_selection_qubo(moments, params);
  const auto solved = solve(built.model, schedule);
  StageOneResult result;
  result.assignment = solved.best;
  result.energy = solved.energy;
  for (std::size_t i = 0; i < solved.best.size(); ++i)
    if (solved.best[i]) result.selected_assets.push_back(i);
  result.empty_selection = result.selected_assets.empty();
  return result;
}

/// One asset's bit-block penalty as explicit coefficients: constant 1,
/// linear -1 per bit, +1 per unordered bit pair. By bit count m its value is
/// 1 - m + m(m-1)/2.
struct BlockPenaltyTerm {
  int k = 1;
  double constant = 1.0;

  explicit BlockPenaltyTerm(int k_bits) : k(k_bits) {
    if (k_bits < 1)
      throw std::invalid_argument("BlockPenaltyTerm: need at least one bit");
  }

  /// Value at an assignment of the K block bits.
  double value(const BinaryAssignment& block_bits) const {
    int set = 0;
    for (int b = 0; b < k; ++b) set += block_bits[static_cast<std::size_t>(b)] ? 1 : 0;
    return 1.0 - set + 0.5 * set * (set - 1);
  }

  /// Adds `factor` times the penalty to the bit block of `asset` in a model
  /// over n*K variables; returns the constant contribution (factor * 1).
  double add_to(QuboModel& model, std::size_t asset, double factor) const {
    for (int b = 0; b < k; ++b)
      model.add_linear(fractional_index(asset, b, k), -factor);
    for (int b = 0; b < k; ++b)
      for (int b2 = b + 1; b2 < k; ++b2)
        // A +factor * x * x' product splits in half across the symmetric
        // matrix entries (the evaluator counts each unordered pair twice).
        model.add_quad(fractional_index(asset, b, k),
                       fractional_index(asset, b2, k), 0.5 * factor);
    return factor * constant;
  }
};

inline BlockPenaltyTerm inequality_penalty_term(int k_bits) {
  return BlockPenaltyTerm(k_bits);
}

/// The aggregate adjustment: per selected asset, factor c_e * M with c_e
/// drawn from (0, 0.5].
struct AdjustedPenalty {
  int k = 1;
  std::vector<std::pair<std::size_t, double>> asset_factors;  // (asset, c_e * M)

  double value(const BinaryAssignment& x) const {
    const BlockPenaltyTerm term(k);
    double total = 0.0;
    for (const auto& [asset, factor] : asset_factors) {
      BinaryAssignment block(static_cast<std::size_t>(k));
      for (int b = 0; b < k; ++b)
        block[static_cast<std::size_t>(b)] = x[fractional_index(asset, b, k)];
      total += factor * term.value(block);
    }
    return total;
  }

  /// Adds every block term to the model; returns the constant contribution.
  double add_to(QuboModel& model) const {
    const BlockPenaltyTerm term(k);
    double constant = 0.0;
    for (const auto& [asset, factor] : asset_factors)
      constant += term.add_to(model, asset, factor);
    return constant;
  }
};

/// Builds the adjustment from explicit per-asset factors c_e (test hook; the
/// seeded overload below draws them).
inline AdjustedPenalty adjusted_penalty_with_factors(
    const std::vector<std::size_t>& selected, int k_bits, double m,
    const std::vector<double>& factors) {
  if (factors.size() != selected.size())
    throw std::invalid_argument("adjusted_penalty: factor count mismatch");
  AdjustedPenalty adj;
  adj.k = k_bits;
  for (std::size_t e = 0; e < selected.size(); ++e)
    adj.asset_factors.emplace_back(selected[e], factors[e] * m);
  return adj;
}

/// Draws c_e in (0, 0.5] per selected asset (ascending asset order,
/// deterministic per seed) and scales by M. When `overwrite_compat` is set,
/// only the last asset's term is kept, mirroring a literal reading of the
/// conversion loop in which each iteration replaces the previous adjustment
/// instead of accumulating it.
inline AdjustedPenalty adjusted_penalty(const std::vector<std::size_t>& selected,
                                        int k_bits, double m, std::uint64_t seed,
                                        bool overwrite_compat = false) {
  if (!(m > 0.0)) throw std::invalid_argument("adjusted_penalty: M must be > 0");
  auto gen = rng::make_engine(seed);
  std::vector<double> factors;
  factors.reserve(selected.size());
  for (std::size_t e = 0; e < selected.size(); ++e)
    factors.push_back(rng::uniform_half_open_top(gen));
  auto adj = adjusted_penalty_with_factors(selected, k_bits, m, factors);
  if (overwrite_compat && adj.asset_factors.size() > 1)
    adj.asset_factors.erase(adj.asset_factors.begin(), adj.asset_factors.end() - 1);
  return adj;
}

struct PipelineOutcome {
  PortfolioSolution solution;
  double wall_time = 0.0;  // seconds
  double energy = 0.0;     // energy in that pipeline's own model
};

struct TwoStageComparison {
  PipelineOutcome with_result;     // wall_time includes stage one
  PipelineOutcome without_result;
  double improvement_ratio = 0.0;  // without.wall_time / with.wall_time
  StageOneResult selection;
  AdjustedPenalty adjustment;
};

/// Runs the fractional model bare ("without") and with the stage-one-derived
/// adjustment ("with"). Both stage-two solves share the same derived seed,
/// so an empty selection makes the runs identical; stage-one time is charged
/// to the "with" pipeline.
inline TwoStageComparison run_comparison(const MomentEstimates& moments,
                                         const EncodingParams& params,
                                         const AnnealSchedule& schedule,
                                         std::uint64_t seed,
                                         bool overwrite_compat = false) {
  using clock = std::chrono::steady_clock;
  TwoStageComparison cmp;
  const auto h1 = build_fractional_qubo(moments, params);

  AnnealSchedule stage_two_schedule = schedule;
  stage_two_schedule.seed = rng::derive_seed(seed, two_stage_streams::kStageTwo);

  {
    const auto t0 = clock::now();
    const auto solved = solve(h1.model, stage_two_schedule);
    cmp.without_result.wall_time =
        std::chrono::duration<double>(clock::now() - t0).count();
    cmp.without_result.energy = solved.energy;
    cmp.without_result.solution = decode(solved.best, moments, params, solved.energy);
  }

  {
    const auto t0 = clock::now();
    AnnealSchedule stage_one_schedule = schedule;
    stage_one_schedule.seed = rng::derive_seed(seed, two_stage_streams::kStageOne);
    cmp.selection = stage_one(moments, params, stage_one_schedule);

    QuboModel h2 = h1.model;
    if (!cmp.selection.empty_selection) {
      cmp.adjustment = adjusted_penalty(
          cmp.selection.selected_assets, params.k, params.m,
          rng::derive_seed(seed, two_stage_streams::kFactors), overwrite_compat);
      cmp.adjustment.add_to(h2);
    } else {
      cmp.adjustment.k = params.k;
    }
    const auto solved = solve(h2, stage_two_schedule);
    cmp.with_result.wall_time =
        std::chrono::duration<double>(clock::now() - t0).count();
    cmp.with_result.energy = solved.energy;
    cmp.with_result.solution = decode(solved.best, moments, params, solved.energy);
  }

  cmp.improvement_ratio =
      cmp.with_result.wall_time > 0.0
          ? cmp.without_result.wall_time / cmp.with_result.wall_time
          : 0.0;
  return cmp;
}

}  // namespace qpt
