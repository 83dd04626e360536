/// Dense QUBO model H(x) = sum_i a_i x_i + sum_{i,j} b_ij x_i x_j over
/// binary x, with b symmetric and zero on the diagonal (any diagonal
/// quadratic contribution folds into the linear term since x^2 = x).
/// Ships evaluation, an exhaustive solver for small instances, a
/// fixed-point coefficient-precision check and JSON (de)serialization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpt/rng.hpp"

namespace qpt {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SizeLimitError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class QuboModel {
 public:
  QuboModel() = default;

  explicit QuboModel(std::size_t num_vars)
      : n_(num_vars), linear_(num_vars, 0.0), quad_(num_vars * num_vars, 0.0) {
    if (num_vars == 0) throw DimensionError("QuboModel: num_vars must be >= 1");
  }

  std::size_t num_vars() const { return n_; }

  double linear(std::size_t i) const { return linear_[i]; }
  const std::vector<double>& linear_terms() const { return linear_; }

  /// Symmetric matrix entry b_ij. The i<j pair contributes 2*b_ij to the
  /// energy (once as (i,j) and once as (j,i) in the double sum).
  double quad(std::size_t i, std::size_t j) const { return quad_[i * n_ + j]; }

  /// Row i of the quadratic matrix, contiguous, length num_vars.
  const double* quad_row(std::size_t i) const { return quad_.data() + i * n_; }

  void add_linear(std::size_t i, double v) { linear_[i] += v; }

  /// Accumulates a symmetric quadratic entry; diagonal contributions are
  /// folded into the linear term.
  void add_quad(std::size_t i, std::size_t j, double v) {
    if (i == j) {
      linear_[i] += v;
      return;
    }
    quad_[i * n_ + j] += v;
    quad_[j * n_ + i] += v;
  }

  void scale(double factor) {
    for (double& a : linear_) a *= factor;
    for (double& b : quad_) b *= factor;
  }

  /// Checks the structural invariants (finite, symmetric, zero diagonal).
  void validate() const {
    for (double a : linear_)
      if (!std::isfinite(a)) throw std::invalid_argument("QuboModel: non-finite linear coefficient");
    for (std::size_t i = 0; i < n_; ++i) {
      if (quad_[i * n_ + i] != 0.0)
        throw std::invalid_argument("QuboModel: nonzero quadratic diagonal");
      for (std::size_t j = i + 1; j < n_; ++j) {
        double bij = quad_[i * n_ + j];
        if (!std::isfinite(bij)) throw std::invalid_argument("QuboModel: non-finite quadratic coefficient");
        if (bij != quad_[j * n_ + i])
          throw std::invalid_argument("QuboModel: quadratic matrix not symmetric");
      }
    }
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> linear_;
  std::vector<double> quad_;
};

inline void check_assignment(const QuboModel& model, const BinaryAssignment& x) {
  if (x.size() != model.num_vars())
    throw DimensionError("assignment length " + std::to_string(x.size()) +
                         " does not match model with " +
                         std::to_string(model.num_vars()) + " variables");
}

/// Energy of an assignment: sum_i a_i x_i + sum_{i<j} 2 b_ij x_i x_j.
inline double evaluate(const QuboModel& model, const BinaryAssignment& x) {
  check_assignment(model, x);
  const std::size_t n = model.num_vars();
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!x[i]) continue;
    const double* row = model.quad_row(i);
    double pair_sum = 0.0;
    for (std::size_t j = i + 1; j < n; ++j)
      if (x[j]) pair_sum += row[j];
    energy += model.linear(i) + 2.0 * pair_sum;
  }
  return energy;
}

/// Energy change of flipping bit i in state x; the annealer maintains this
/// incrementally, so the closed form here doubles as its test oracle.
inline double flip_delta(const QuboModel& model, const BinaryAssignment& x,
                         std::size_t i) {
  const std::size_t n = model.num_vars();
  const double* row = model.quad_row(i);
  double field = model.linear(i);
  for (std::size_t j = 0; j < n; ++j)
    if (x[j]) field += 2.0 * row[j];
  return x[i] ? -field : field;
}

struct BruteForceResult {
  BinaryAssignment best;
  double energy = 0.0;
};

inline constexpr std::size_t kBruteForceLimit = 24;

/// Exhaustive minimizer over all 2^n assignments, n <= 24. States are
/// visited in lexicographic order and updated on strict improvement only,
/// so ties resolve to the lexicographically smallest bit string.
inline BruteForceResult brute_force_solve(const QuboModel& model) {
  const std::size_t n = model.num_vars();
  if (n > kBruteForceLimit)
    throw SizeLimitError("brute_force_solve: " + std::to_string(n) +
                         " variables exceeds the limit of " +
                         std::to_string(kBruteForceLimit));
  const std::uint64_t count = std::uint64_t{1} << n;
  BruteForceResult result;
  result.best.assign(n, 0);
  result.energy = 0.0;  // all-zeros state
  BinaryAssignment x(n);
  for (std::uint64_t v = 1; v < count; ++v) {
    // Bit 0 of v maps to the last position, so counter order == lex order.
    for (std::size_t i = 0; i < n; ++i) x[i] = (v >> (n - 1 - i)) & 1u;
    // Evaluated per state (not incrementally) so the reported energy is
    // bit-identical to evaluate() and ties resolve deterministically.
    const double energy = evaluate(model, x);
    if (energy < result.energy) {
      result.energy = energy;
      result.best = x;
    }
  }
  return result;
}

// --- fixed-point precision check -------------------------------------------

/// Default coefficient-to-integer scale for precision validation. 2^48 keeps
/// the bundled fixture's pair coefficients within the 64-bit quadratic budget
/// through theta = 2^22 while theta = 2^25 overflows it.
inline constexpr double kDefaultPrecisionScale = 0x1p48;

struct PrecisionBudget {
  int linear_bits = 76;
  int quadratic_bits = 64;
};

struct OffendingTerm {
  std::size_t i = 0;
  std::size_t j = 0;       // == i for linear terms
  bool is_linear = false;
  double coefficient = 0.0;  // as submitted (pair terms: 2*b_ij)
  int bits_needed = 0;
  int bits_budget = 0;
};

struct PrecisionReport {
  bool ok = true;
  std::vector<OffendingTerm> offending_terms;
};

/// Magnitude bits of round(|c| * scale); 0 when it rounds to zero.
inline int scaled_magnitude_bits(double coefficient, double scale) {
  const double scaled = std::nearbyint(std::abs(coefficient) * scale);
  if (scaled < 1.0) return 0;
  int exp = 0;
  std::frexp(scaled, &exp);  // scaled in [2^(exp-1), 2^exp)
  return exp;
}

/// Flags every coefficient whose fixed-point image at the given scale
/// needs more magnitude bits than the budget allows. Linear terms are
/// checked as a_i, quadratic terms as the submitted i<j pair coefficient
/// 2*b_ij. Report-only; never throws on offending terms.
inline PrecisionReport validate_precision(const QuboModel& model,
                                          const PrecisionBudget& budget,
                                          double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("validate_precision: scale must be > 0");
  PrecisionReport report;
  const std::size_t n = model.num_vars();
  for (std::size_t i = 0; i < n; ++i) {
    const int bits = scaled_magnitude_bits(model.linear(i), scale);
    if (bits > budget.linear_bits)
      report.offending_terms.push_back(
          {i, i, true, model.linear(i), bits, budget.linear_bits});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = model.quad_row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double pair = 2.0 * row[j];
      const int bits = scaled_magnitude_bits(pair, scale);
      if (bits > budget.quadratic_bits)
        report.offending_terms.push_back(
            {i, j, false, pair, bits, budget.quadratic_bits});
    }
  }
  report.ok = report.offending_terms.empty();
  return report;
}

// --- JSON -------------------------------------------------------------------

/// {"n": int, "linear": [...], "quadratic_upper": [[i, j, b_ij], ...]} with
/// i < j, nonzero entries only, ordered by (i, j).
inline nlohmann::json qubo_to_json(const QuboModel& model) {
  nlohmann::json j;
  const std::size_t n = model.num_vars();
  j["n"] = n;
  j["linear"] = model.linear_terms();
  nlohmann::json upper = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = model.quad_row(i);
    for (std::size_t k = i + 1; k < n; ++k)
      if (row[k] != 0.0) upper.push_back({i, k, row[k]});
  }
  j["quadratic_upper"] = std::move(upper);
  return j;
}

inline QuboModel qubo_from_json(const nlohmann::json& j) {
  const std::size_t n = j.at("n").get<std::size_t>();
  QuboModel model(n);
  const auto& linear = j.at("linear");
  if (linear.size() != n)
    throw std::invalid_argument("qubo_from_json: linear length != n");
  for (std::size_t i = 0; i < n; ++i)
    model.add_linear(i, linear[i].get<double>());
  for (const auto& entry : j.at("quadratic_upper")) {
    const std::size_t i = entry.at(0).get<std::size_t>();
    const std::size_t k = entry.at(1).get<std::size_t>();
    if (i >= k || k >= n)
      throw std::invalid_argument("qubo_from_json: quadratic_upper index out of order");
    model.add_quad(i, k, entry.at(2).get<double>());
  }
  model.validate();
  return model;
}

}  // namespace qpt
