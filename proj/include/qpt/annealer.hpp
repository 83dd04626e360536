/// Simulated-annealing QUBO solver: single-bit-flip Metropolis dynamics with
/// geometric cooling and independent restarts. Flip costs are maintained
/// incrementally through per-variable local fields (g_i = a_i + 2 sum_j b_ij
/// x_j, so flipping bit i costs (1 - 2 x_i) * g_i), with periodic full
/// re-synchronization to bound floating-point drift; the final energy is
/// always an exact re-evaluation of the returned assignment.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"

namespace qpt {

struct AnnealSchedule {
  std::size_t sweeps = 1000;    // full passes over the variables
  double t_initial = 1.0;
  double t_final = 1e-3;
  std::size_t restarts = 8;     // independent chains
  std::uint64_t seed = 0;
  bool record_trace = false;    // per-sweep best energy of the best chain
  std::size_t patience = 0;     // optional early stop: end a chain after this
                                // many consecutive sweeps without improvement
                                // of its best energy (0 disables)
  std::size_t max_stagnant_restarts = 0;  // optional early stop: end the solve
                                          // after this many consecutive restarts
                                          // that fail to improve the solve-wide
                                          // best energy (0 disables)

  void validate() const {
    if (sweeps < 1) throw std::invalid_argument("AnnealSchedule: sweeps must be >= 1");
    if (!(t_initial > 0.0) || !(t_final > 0.0) || !(t_final < t_initial) ||
        !std::isfinite(t_initial))
      throw std::invalid_argument(
          "AnnealSchedule: need 0 < t_final < t_initial < inf");
    if (restarts < 1) throw std::invalid_argument("AnnealSchedule: restarts must be >= 1");
  }
};

struct SolveResult {
  BinaryAssignment best;
  double energy = 0.0;         // exact re-evaluation of `best`
  double wall_time = 0.0;      // seconds, full multi-restart solve
  std::size_t restarts_completed = 0;
  std::vector<double> energy_trace;  // non-increasing; empty unless requested
};

namespace detail {

/// Local fields g_i = a_i + 2 sum_j b_ij x_j for the current state.
inline void sync_fields(const QuboModel& model, const BinaryAssignment& x,
                        std::vector<double>& fields) {
  const std::size_t n = model.num_vars();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = model.quad_row(i);
    double acc = model.linear(i);
    for (std::size_t j = 0; j < n; ++j)
      if (x[j]) acc += 2.0 * row[j];
    fields[i] = acc;
  }
}

}  // namespace detail

/// Multi-restart simulated annealing. Deterministic per (model, schedule):
/// restart r draws its stream from derive_seed(schedule.seed, r), and the
/// winner is the lowest energy with ties going to the lowest restart index.
inline SolveResult solve(const QuboModel& model, const AnnealSchedule& schedule) {
  schedule.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = model.num_vars();

  SolveResult result;
  result.best.assign(n, 0);
  result.energy = std::numeric_limits<double>::infinity();

  const double cooling =
      schedule.sweeps > 1
          ? std::pow(schedule.t_final / schedule.t_initial,
                     1.0 / static_cast<double>(schedule.sweeps - 1))
          : 1.0;

  std::vector<double> fields(n, 0.0);
  std::vector<double> trace;
  std::size_t stagnant_restarts = 0;
  for (std::size_t r = 0; r < schedule.restarts; ++r) {
    auto gen = rng::make_engine(rng::derive_seed(schedule.seed, r));
    BinaryAssignment x = rng::random_assignment(n, gen);
    detail::sync_fields(model, x, fields);
    double energy = evaluate(model, x);

    BinaryAssignment chain_best = x;
    double chain_best_energy = energy;
    std::vector<double> chain_trace;
    if (schedule.record_trace) chain_trace.reserve(schedule.sweeps);

    double temperature = schedule.t_initial;
    std::size_t stale_sweeps = 0;
    for (std::size_t sweep = 0; sweep < schedule.sweeps; ++sweep) {
      bool improved = false;
      for (std::size_t i = 0; i < n; ++i) {
        const double delta = (x[i] ? -1.0 : 1.0) * fields[i];
        if (delta <= 0.0 ||
            rng::uniform01(gen) < std::exp(-delta / temperature)) {
          const double sign = x[i] ? -2.0 : 2.0;  // 2 * (new - old)
          x[i] ^= 1;
          energy += delta;
          const double* row = model.quad_row(i);
          for (std::size_t j = 0; j < n; ++j) fields[j] += sign * row[j];
          if (energy < chain_best_energy) {
            chain_best_energy = energy;
            chain_best = x;
            improved = true;
          }
        }
      }
      if (schedule.record_trace) chain_trace.push_back(chain_best_energy);
      if ((sweep + 1) % 64 == 0) {  // bound incremental-delta drift
        detail::sync_fields(model, x, fields);
        energy = evaluate(model, x);
      }
      temperature *= cooling;
      stale_sweeps = improved ? 0 : stale_sweeps + 1;
      if (schedule.patience > 0 && stale_sweeps >= schedule.patience) break;
    }

    // Exact energy of the chain's best state; strict < keeps the lowest
    // restart index on ties.
    const double chain_exact = evaluate(model, chain_best);
    if (chain_exact < result.energy) {
      result.energy = chain_exact;
      result.best = chain_best;
      if (schedule.record_trace) trace = std::move(chain_trace);
      stagnant_restarts = 0;
    } else {
      ++stagnant_restarts;
    }
    ++result.restarts_completed;
    if (schedule.max_stagnant_restarts > 0 &&
        stagnant_restarts >= schedule.max_stagnant_restarts)
      break;
  }

  if (schedule.record_trace) {
    // Re-base the winning chain's trace on exact evaluation semantics: clamp
    // to non-increasing (incremental rounding could wiggle the last ulp).
    for (std::size_t s = 1; s < trace.size(); ++s)
      trace[s] = std::min(trace[s], trace[s - 1]);
    result.energy_trace = std::move(trace);
  }

  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Probe-based default schedule: t_initial is the largest |single-flip cost|
/// seen over 100 random states (every variable probed in each), t_final is
/// 1e-3 of that, sweeps scale linearly with the variable count.
inline AnnealSchedule default_schedule(const QuboModel& model,
                                       std::uint64_t seed = 0) {
  const std::size_t n = model.num_vars();
  // Probe stream deliberately distinct from any restart stream index.
  auto gen = rng::make_engine(rng::derive_seed(seed, 0xfffffffffull));
  AnnealSchedule s;
  s.seed = seed;
  double max_delta = 0.0;
  std::vector<double> fields(n, 0.0);
  for (int probe = 0; probe < 100; ++probe) {
    const BinaryAssignment x = rng::random_assignment(n, gen);
    detail::sync_fields(model, x, fields);
    for (std::size_t i = 0; i < n; ++i)
      max_delta = std::max(max_delta, std::abs(fields[i]));
  }
  s.t_initial = std::max(max_delta, 1e-9);
  s.t_final = 1e-3 * s.t_initial;
  s.sweeps = std::min<std::size_t>(200 * n, 1000000);
  s.restarts = 8;
  return s;
}

}  // namespace qpt
