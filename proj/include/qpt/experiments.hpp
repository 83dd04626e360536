/// Experiment drivers built on the core modules: the slicing-range dot cloud
/// (solutions across a band of target returns scored against the continuous
/// frontier), the (K, theta, M-order) parameter sweep with per-cell precision
/// validation and null-result accounting, seeded two-stage comparison
/// batches, and the plot-data emitter that reshapes experiment outputs into
/// per-figure CSV files plus a manifest.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpt/annealer.hpp"
#include "qpt/backtest.hpp"
#include "qpt/encoding.hpp"
#include "qpt/frontier.hpp"
#include "qpt/market_data.hpp"
#include "qpt/penalty.hpp"
#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"
#include "qpt/two_stage.hpp"

namespace qpt {

/// Middle value (average of the middle two for even sizes).
inline double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

// --- slicing-range experiment ----------------------------------------------------

/// Safety margin applied on top of the sampled penalty lower bound.
inline constexpr double kPenaltyMargin = 1.1;

struct SliceDot {
  double target_b = 0.0;   // sampled return floor
  double m_used = 0.0;     // penalty coefficient used for this dot
  bool bound_derived = false;  // sampling produced a bound (else fallback M)
  bool valid = false;          // false: solve produced no usable portfolio
  double expected_return = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double error = std::numeric_limits<double>::quiet_NaN();  // vs frontier
  bool out_of_range = false;  // scored beyond the frontier's return range
  std::string note;           // failure reason when !valid
};

/// Solves the fractional model across `num_samples` evenly spaced return
/// floors in [b_low, b_high]; each dot gets its own sampled penalty bound
/// (margin-scaled, falling back to params.m when no bound emerges), is
/// solved (annealer, or exact enumeration when `exhaustive`), decoded, and
/// scored against the continuous frontier at its own return. Per-dot
/// failures are recorded in place; the experiment always completes.
inline std::vector<SliceDot> slicing_range_experiment(
    const MomentEstimates& moments, double b_low, double b_high,
    std::size_t num_samples, const EncodingParams& params,
    const AnnealSchedule& schedule, std::uint64_t seed, bool exhaustive = false,
    std::size_t alg1_samples = 0) {
  if (num_samples == 0)
    throw std::invalid_argument("slicing_range_experiment: num_samples must be >= 1");
  if (!(b_low <= b_high))
    throw std::invalid_argument("slicing_range_experiment: b_low must be <= b_high");
  const double r_min = moments.expected_returns.minCoeff();
  const double r_max = moments.expected_returns.maxCoeff();
  if (b_low < r_min - 1e-12 || b_high > r_max + 1e-12)
    throw std::invalid_argument(
        "slicing_range_experiment: band outside the achievable return range");

  std::vector<SliceDot> dots;
  dots.reserve(num_samples);
  for (std::size_t j = 0; j < num_samples; ++j) {
    SliceDot dot;
    dot.target_b =
        num_samples == 1
            ? b_low
            : b_low + (b_high - b_low) * static_cast<double>(j) /
                          static_cast<double>(num_samples - 1);

    EncodingParams pb = params;
    pb.target_return = dot.target_b;

    // Penalty bound sampled on the bare risk objective vs the return row.
    EncodingParams bare = pb;
    bare.m = 0.0;
    const auto risk = build_fractional_qubo(moments, bare);
    const auto constraint = fractional_return_constraint(moments, pb);
    const std::size_t n_samples =
        alg1_samples ? alg1_samples : default_num_samples(risk.model.num_vars());
    const auto est = estimate_penalty(risk.model, constraint, n_samples,
                                      rng::derive_seed(seed, 2 * j));
    dot.bound_derived = est.bound_derived;
    dot.m_used = est.bound_derived ? est.m_lower * kPenaltyMargin : params.m;

    pb.m = dot.m_used;
    const auto built = build_fractional_qubo(moments, pb);
    BinaryAssignment best;
    if (exhaustive) {
      best = brute_force_solve(built.model).best;
    } else {
      AnnealSchedule sched = schedule;
      sched.seed = rng::derive_seed(seed, 2 * j + 1);
      best = solve(built.model, sched).best;
    }
    const auto sol = decode(best, moments, pb);
    if (sol.all_zero) {
      dot.note = "all-zero decode";
      dots.push_back(std::move(dot));
      continue;
    }
    dot.valid = true;
    dot.expected_return = sol.expected_return;
    dot.variance = sol.variance;
    const auto err = exact_frontier_error(sol, moments);
    dot.error = err.value;
    dot.out_of_range = err.out_of_range;
    dots.push_back(std::move(dot));
  }
  return dots;
}

// --- parameter sweep ---------------------------------------------------------------

enum class MOrder { linear, n_log_n, quadratic };

inline std::string m_order_name(MOrder o) {
  switch (o) {
    case MOrder::linear: return "linear";
    case MOrder::n_log_n: return "n_log_n";
    default: return "quadratic";
  }
}

/// Leading term of each order at a given theta.
inline double m_order_value(MOrder o, double theta) {
  switch (o) {
    case MOrder::linear: return theta;
    case MOrder::n_log_n: return theta * std::log2(theta);
    default: return theta * theta;
  }
}

struct SweepRun {
  std::size_t run = 0;
  bool null_result = false;
  std::string null_reason;  // "precision", "all-zero decode", "undefined sharpe"
  double frontier_error = std::numeric_limits<double>::quiet_NaN();
  double expected_return = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
};

struct SweepCell {
  int k = 0;
  double theta = 0.0;
  MOrder order = MOrder::linear;
  double anchor_c = 0.0;  // order constant fitted at the reference theta
  double m_used = 0.0;    // anchor_c * order(theta)
  bool precision_ok = true;
  std::size_t offending_terms = 0;
  std::size_t null_results = 0;
  std::vector<SweepRun> runs;
};

struct SweepSpec {
  std::vector<int> k_set{5, 10, 20};
  std::vector<double> theta_set;
  std::vector<MOrder> orders{MOrder::linear, MOrder::n_log_n, MOrder::quadratic};
  std::size_t runs_per_cell = 5;
  double theta_ref = 1024.0;      // anchor point for the order constants
  std::size_t alg1_samples = 4000;  // penalty-bound sample count at the anchor
  EncodingParams base;            // return floor, penalty sign, fallback m
  AnnealSchedule schedule;        // per-run seeds are derived
  PrecisionBudget budget{};
  double precision_scale = kDefaultPrecisionScale;
  std::size_t jobs = 1;           // worker threads across cells
  // Probe each cell's temperature range from its own model (coefficient
  // scales differ by orders of magnitude across theta); when false the
  // schedule's temperatures apply to every cell verbatim.
  bool auto_temperature = true;
};

/// Runs every (K, theta, M-order) cell: M is anchor_c * order(theta), with
/// anchor_c fitted per (K, order) so all orders agree with the sampled
/// penalty bound at theta_ref. Cells failing precision validation are kept
/// as all-null cells (no solves); otherwise each run solves with a derived
/// seed and scores against the continuous frontier. Null results are
/// precision failures, all-zero decodes, and undefined Sharpe ratios.
inline std::vector<SweepCell> run_sweep(const MomentEstimates& moments,
                                        const SweepSpec& spec, std::uint64_t seed) {
  if (spec.k_set.empty() || spec.theta_set.empty() || spec.orders.empty())
    throw std::invalid_argument("run_sweep: empty grid");
  if (spec.runs_per_cell == 0)
    throw std::invalid_argument("run_sweep: runs_per_cell must be >= 1");
  if (!(spec.theta_ref > 1.0))
    throw std::invalid_argument("run_sweep: theta_ref must be > 1");
  for (double t : spec.theta_set)
    if (!(t > 1.0))
      throw std::invalid_argument("run_sweep: theta values must be > 1");

  // Anchor the order constants: one penalty-bound estimate per K at the
  // reference theta, shared by all orders of that K.
  std::vector<double> m_ref_by_k(spec.k_set.size());
  for (std::size_t ki = 0; ki < spec.k_set.size(); ++ki) {
    EncodingParams ref = spec.base;
    ref.k = spec.k_set[ki];
    ref.theta = spec.theta_ref;
    ref.m = 0.0;
    const auto risk = build_fractional_qubo(moments, ref);
    const auto constraint = fractional_return_constraint(moments, ref);
    const std::size_t anchor_samples =
        spec.alg1_samples ? spec.alg1_samples
                          : default_num_samples(risk.model.num_vars());
    const auto est = estimate_penalty(risk.model, constraint, anchor_samples,
                                      rng::derive_seed(seed, 0x5eed0000ull + ki));
    m_ref_by_k[ki] =
        est.bound_derived ? est.m_lower * kPenaltyMargin : spec.base.m;
  }

  // Flat cell grid; every cell's seeds derive from (seed, cell index, run),
  // so results are independent of the worker count.
  struct CellDesc {
    std::size_t ki;
    double theta;
    MOrder order;
  };
  std::vector<CellDesc> grid;
  for (std::size_t ki = 0; ki < spec.k_set.size(); ++ki)
    for (double theta : spec.theta_set)
      for (MOrder order : spec.orders) grid.push_back({ki, theta, order});

  std::vector<SweepCell> cells(grid.size());
  auto run_cell = [&](std::size_t cell_index) {
    const CellDesc& desc = grid[cell_index];
    SweepCell cell;
    cell.k = spec.k_set[desc.ki];
    cell.theta = desc.theta;
    cell.order = desc.order;
    cell.anchor_c = m_ref_by_k[desc.ki] / m_order_value(desc.order, spec.theta_ref);
    cell.m_used = cell.anchor_c * m_order_value(desc.order, desc.theta);

    EncodingParams params = spec.base;
    params.k = cell.k;
    params.theta = desc.theta;
    params.m = cell.m_used;
    const auto built = build_fractional_qubo(moments, params);
    const auto report =
        validate_precision(built.model, spec.budget, spec.precision_scale);
    cell.precision_ok = report.ok;
    cell.offending_terms = report.offending_terms.size();

    AnnealSchedule cell_schedule = spec.schedule;
    if (spec.auto_temperature && cell.precision_ok) {
      const auto probed = default_schedule(built.model, 0);
      cell_schedule.t_initial = probed.t_initial;
      cell_schedule.t_final = probed.t_final;
    }

    for (std::size_t r = 0; r < spec.runs_per_cell; ++r) {
      SweepRun run;
      run.run = r;
      if (!cell.precision_ok) {
        run.null_result = true;
        run.null_reason = "precision";
      } else {
        AnnealSchedule sched = cell_schedule;
        sched.seed = rng::derive_seed(rng::derive_seed(seed, 1 + cell_index), r);
        const auto solved = solve(built.model, sched);
        const auto sol = decode(solved.best, moments, params, solved.energy);
        if (sol.all_zero) {
          run.null_result = true;
          run.null_reason = "all-zero decode";
        } else if (!(sol.variance > 0.0)) {
          run.null_result = true;
          run.null_reason = "undefined sharpe";
        } else {
          run.expected_return = sol.expected_return;
          run.variance = sol.variance;
          run.frontier_error = exact_frontier_error(sol, moments).value;
        }
      }
      if (run.null_result) ++cell.null_results;
      cell.runs.push_back(std::move(run));
    }
    cells[cell_index] = std::move(cell);
  };

  const std::size_t workers = std::max<std::size_t>(1, spec.jobs);
  if (workers == 1 || grid.size() == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    const std::size_t count = std::min(workers, grid.size());
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t)
      pool.emplace_back([&] {
        try {
          for (std::size_t i = next.fetch_add(1); i < grid.size();
               i = next.fetch_add(1))
            run_cell(i);
        } catch (...) {
          const std::scoped_lock lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(grid.size());  // drain remaining work
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  return cells;
}

// --- two-stage batch ---------------------------------------------------------------

struct TwoStagePipelineStats {
  double wall_time = 0.0;
  double energy = 0.0;
  bool valid = false;  // decoded to a usable (non-all-zero) portfolio
  double expected_return = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double frontier_error = std::numeric_limits<double>::quiet_NaN();
};

struct TwoStageBatchRow {
  std::size_t run = 0;
  double target_return = 0.0;  // the floor this run optimized against
  double improvement_ratio = 0.0;
  std::size_t selected_count = 0;
  bool empty_selection = false;
  TwoStagePipelineStats with_stats;
  TwoStagePipelineStats without_stats;
};

namespace detail {

inline TwoStagePipelineStats pipeline_stats(const PipelineOutcome& outcome,
                                            const MomentEstimates& moments) {
  TwoStagePipelineStats s;
  s.wall_time = outcome.wall_time;
  s.energy = outcome.energy;
  if (!outcome.solution.all_zero) {
    s.valid = true;
    s.expected_return = outcome.solution.expected_return;
    s.variance = outcome.solution.variance;
    s.frontier_error = exact_frontier_error(outcome.solution, moments).value;
  }
  return s;
}

}  // namespace detail

/// `runs` seeded two-stage comparisons; run r uses the derived seed f(seed, r).
/// With `randomize_targets`, each run draws its own return floor uniformly
/// from the achievable range instead of reusing params.target_return.
inline std::vector<TwoStageBatchRow> run_two_stage_batch(
    const MomentEstimates& moments, const EncodingParams& params,
    const AnnealSchedule& schedule, std::uint64_t seed, std::size_t runs,
    bool overwrite_compat = false, bool randomize_targets = false) {
  if (runs == 0) throw std::invalid_argument("run_two_stage_batch: runs must be >= 1");
  std::vector<TwoStageBatchRow> rows;
  rows.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    EncodingParams run_params = params;
    if (randomize_targets)
      run_params.target_return =
          random_target_return(moments, rng::derive_seed(seed, 10000 + r));
    const auto cmp = run_comparison(moments, run_params, schedule,
                                    rng::derive_seed(seed, r), overwrite_compat);
    TwoStageBatchRow row;
    row.run = r;
    row.target_return = run_params.target_return;
    row.improvement_ratio = cmp.improvement_ratio;
    row.selected_count = cmp.selection.selected_assets.size();
    row.empty_selection = cmp.selection.empty_selection;
    row.with_stats = detail::pipeline_stats(cmp.with_result, moments);
    row.without_stats = detail::pipeline_stats(cmp.without_result, moments);
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- serialization -----------------------------------------------------------------

namespace detail {

inline nlohmann::json nan_to_null(double v) {
  return std::isnan(v) ? nlohmann::json{} : nlohmann::json(v);
}

inline std::string csv_number(const nlohmann::json& v) {
  return v.is_null() ? std::string{} : format_g17(v.get<double>());
}

}  // namespace detail

inline nlohmann::json frontier_to_json(const FrontierTrace& trace) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : trace.points)
    points.push_back({{"target_return", p.target_return},
                      {"variance", p.variance},
                      {"weights", p.weights}});
  return {{"r_min", trace.r_min}, {"r_max", trace.r_max}, {"points", points}};
}

/// CSV `target_return,variance,w_1..w_n`, one row per frontier point.
inline std::string frontier_to_csv(const FrontierTrace& trace) {
  std::string out = "target_return,variance";
  const std::size_t n = trace.points.empty() ? 0 : trace.points[0].weights.size();
  for (std::size_t i = 1; i <= n; ++i) out += ",w_" + std::to_string(i);
  out += '\n';
  for (const auto& p : trace.points) {
    out += detail::format_g17(p.target_return) + ',' + detail::format_g17(p.variance);
    for (double w : p.weights) out += ',' + detail::format_g17(w);
    out += '\n';
  }
  return out;
}

inline nlohmann::json slice_to_json(const std::vector<SliceDot>& dots) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dots)
    arr.push_back({{"target_return", d.target_b},
                   {"m_used", d.m_used},
                   {"bound_derived", d.bound_derived},
                   {"valid", d.valid},
                   {"expected_return", detail::nan_to_null(d.expected_return)},
                   {"variance", detail::nan_to_null(d.variance)},
                   {"frontier_error", detail::nan_to_null(d.error)},
                   {"out_of_range", d.out_of_range},
                   {"note", d.note}});
  return {{"dots", arr}};
}

inline std::string slice_to_csv(const std::vector<SliceDot>& dots) {
  std::string out =
      "target_return,m_used,bound_derived,valid,expected_return,variance,"
      "frontier_error,out_of_range,note\n";
  for (const auto& d : dots) {
    out += detail::format_g17(d.target_b) + ',' + detail::format_g17(d.m_used) + ',';
    out += (d.bound_derived ? "1," : "0,");
    out += (d.valid ? "1," : "0,");
    out += (std::isnan(d.expected_return) ? "" : detail::format_g17(d.expected_return)) +
           std::string(1, ',');
    out += (std::isnan(d.variance) ? "" : detail::format_g17(d.variance)) +
           std::string(1, ',');
    out += (std::isnan(d.error) ? "" : detail::format_g17(d.error)) + std::string(1, ',');
    out += (d.out_of_range ? "1," : "0,");
    out += d.note + '\n';
  }
  return out;
}

inline nlohmann::json sweep_to_json(const std::vector<SweepCell>& cells) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : c.runs)
      runs.push_back({{"run", r.run},
                      {"null_result", r.null_result},
                      {"null_reason", r.null_reason},
                      {"frontier_error", detail::nan_to_null(r.frontier_error)},
                      {"expected_return", detail::nan_to_null(r.expected_return)},
                      {"variance", detail::nan_to_null(r.variance)}});
    arr.push_back({{"k", c.k},
                   {"theta", c.theta},
                   {"m_order", m_order_name(c.order)},
                   {"anchor_c", c.anchor_c},
                   {"m", c.m_used},
                   {"precision_ok", c.precision_ok},
                   {"offending_terms", c.offending_terms},
                   {"null_results", c.null_results},
                   {"runs", runs}});
  }
  return {{"cells", arr}};
}

/// Long format: one row per run.
inline std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
  std::string out =
      "k,theta,m_order,anchor_c,m,precision_ok,run,null_result,null_reason,"
      "frontier_error,expected_return,variance\n";
  for (const auto& c : cells) {
    const std::string prefix = std::to_string(c.k) + ',' +
                               detail::format_g17(c.theta) + ',' +
                               m_order_name(c.order) + ',' +
                               detail::format_g17(c.anchor_c) + ',' +
                               detail::format_g17(c.m_used) + ',' +
                               (c.precision_ok ? "1," : "0,");
    for (const auto& r : c.runs) {
      out += prefix + std::to_string(r.run) + ',';
      out += (r.null_result ? "1," : "0,") + r.null_reason + ',';
      out += (std::isnan(r.frontier_error) ? "" : detail::format_g17(r.frontier_error)) +
             std::string(1, ',');
      out += (std::isnan(r.expected_return) ? "" : detail::format_g17(r.expected_return)) +
             std::string(1, ',');
      out += (std::isnan(r.variance) ? "" : detail::format_g17(r.variance)) + '\n';
    }
  }
  return out;
}

inline nlohmann::json two_stage_batch_to_json(const std::vector<TwoStageBatchRow>& rows) {
  auto stats_json = [](const TwoStagePipelineStats& s) {
    return nlohmann::json{{"wall_time", s.wall_time},
                          {"energy", s.energy},
                          {"valid", s.valid},
                          {"expected_return", detail::nan_to_null(s.expected_return)},
                          {"variance", detail::nan_to_null(s.variance)},
                          {"frontier_error", detail::nan_to_null(s.frontier_error)}};
  };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"run", r.run},
                   {"target_return", r.target_return},
                   {"improvement_ratio", r.improvement_ratio},
                   {"selected_count", r.selected_count},
                   {"empty_selection", r.empty_selection},
                   {"with", stats_json(r.with_stats)},
                   {"without", stats_json(r.without_stats)}});
  return {{"runs", arr}};
}

// --- plot emission -----------------------------------------------------------------

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Reshapes whatever experiment outputs exist in `results_dir` into
/// per-figure CSV files under `out_dir` and writes a manifest enumerating
/// the emitted figure families. Sources are the canonical JSON files the
/// subcommands write: frontier.json, slice.json, sweep.json, backtest.json,
/// two_stage.json (the last one feeds three figure families). Timestamps
/// appear only in the manifest, keeping the figure files byte-reproducible.
inline nlohmann::json emit_plots(const std::filesystem::path& results_dir,
                                 const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const std::vector<std::string> known = {"frontier.json", "slice.json",
                                          "sweep.json", "backtest.json",
                                          "two_stage.json"};
  bool any = false;
  for (const auto& name : known) any |= fs::exists(results_dir / name);
  if (!any) {
    std::string msg = "emit_plots: no experiment outputs in " +
                      results_dir.string() + "; expected any of:";
    for (const auto& name : known) msg += ' ' + name;
    throw std::runtime_error(msg);
  }
  fs::create_directories(out_dir);

  nlohmann::json families = nlohmann::json::array();
  auto emit = [&](const std::string& family, const std::string& source,
                  const std::string& file, const std::string& content,
                  std::size_t rows) {
    detail::write_text(out_dir / file, content);
    families.push_back(
        {{"name", family}, {"source", source}, {"file", file}, {"rows", rows}});
  };

  if (fs::exists(results_dir / "frontier.json")) {
    const auto j = detail::read_json(results_dir / "frontier.json");
    std::string csv = "target_return,variance\n";
    for (const auto& p : j.at("points"))
      csv += detail::csv_number(p.at("target_return")) + ',' +
             detail::csv_number(p.at("variance")) + '\n';
    emit("frontier_trace", "frontier.json", "fig_frontier_trace.csv", csv,
         j.at("points").size());
  }
  if (fs::exists(results_dir / "slice.json")) {
    const auto j = detail::read_json(results_dir / "slice.json");
    std::string csv = "target_return,expected_return,variance,frontier_error,valid\n";
    for (const auto& d : j.at("dots")) {
      csv += detail::csv_number(d.at("target_return")) + ',';
      csv += detail::csv_number(d.at("expected_return")) + ',';
      csv += detail::csv_number(d.at("variance")) + ',';
      csv += detail::csv_number(d.at("frontier_error")) + ',';
      csv += (d.at("valid").get<bool>() ? "1\n" : "0\n");
    }
    emit("slice_dots", "slice.json", "fig_slice_dots.csv", csv, j.at("dots").size());
  }
  if (fs::exists(results_dir / "sweep.json")) {
    const auto j = detail::read_json(results_dir / "sweep.json");
    std::string csv = "k,theta,m_order,run,frontier_error,null_result\n";
    std::size_t rows = 0;
    for (const auto& c : j.at("cells"))
      for (const auto& r : c.at("runs")) {
        csv += std::to_string(c.at("k").get<int>()) + ',' +
               detail::csv_number(c.at("theta")) + ',' +
               c.at("m_order").get<std::string>() + ',' +
               std::to_string(r.at("run").get<std::size_t>()) + ',' +
               detail::csv_number(r.at("frontier_error")) + ',' +
               (r.at("null_result").get<bool>() ? "1\n" : "0\n");
        ++rows;
      }
    emit("sweep_box", "sweep.json", "fig_sweep_box.csv", csv, rows);
  }
  if (fs::exists(results_dir / "backtest.json")) {
    const auto j = detail::read_json(results_dir / "backtest.json");
    std::string csv =
        "quarter,realized_return,cumulative_return,cumulative_compounded\n";
    for (const auto& r : j.at("rows"))
      csv += r.at("quarter").get<std::string>() + ',' +
             detail::csv_number(r.at("realized_return")) + ',' +
             detail::csv_number(r.at("cumulative_return")) + ',' +
             detail::csv_number(r.at("cumulative_compounded")) + '\n';
    emit("backtest_curves", "backtest.json", "fig_backtest_curves.csv", csv,
         j.at("rows").size());
  }
  if (fs::exists(results_dir / "two_stage.json")) {
    const auto j = detail::read_json(results_dir / "two_stage.json");
    std::string sols = "run,pipeline,expected_return,variance,wall_time\n";
    std::string errs = "run,pipeline,frontier_error\n";
    std::string ratios = "run,improvement_ratio\n";
    for (const auto& r : j.at("runs")) {
      const auto run = std::to_string(r.at("run").get<std::size_t>());
      for (const char* side : {"with", "without"}) {
        const auto& s = r.at(side);
        sols += run + ',' + side + ',' + detail::csv_number(s.at("expected_return")) +
                ',' + detail::csv_number(s.at("variance")) + ',' +
                detail::csv_number(s.at("wall_time")) + '\n';
        errs += run + ',' + side + ',' + detail::csv_number(s.at("frontier_error")) +
                '\n';
      }
      ratios += run + ',' + detail::csv_number(r.at("improvement_ratio")) + '\n';
    }
    const std::size_t n = j.at("runs").size();
    emit("two_stage_solutions", "two_stage.json", "fig_two_stage_solutions.csv",
         sols, 2 * n);
    emit("two_stage_error_box", "two_stage.json", "fig_two_stage_error_box.csv",
         errs, 2 * n);
    emit("improvement_ratio", "two_stage.json", "fig_improvement_ratio.csv",
         ratios, n);
  }

  nlohmann::json manifest = {{"generated_at", detail::utc_timestamp()},
                             {"families", families}};
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace qpt
