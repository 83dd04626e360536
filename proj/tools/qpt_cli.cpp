// Command-line front end: ingestion, frontier tracing, penalty estimation,
// annealing solves, the slicing / sweep / two-stage experiments, quarterly
// backtests, and plot-data emission. Every subcommand accepts a JSON config
// file (--config) whose values are overridden by explicit flags, writes a
// config echo beside its outputs, and derives all randomness from the one
// global --seed. Exit code 0 means no hard error; null experiment results
// are data, not failures.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpt/qpt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "qpt_out";
  std::size_t jobs = 1;
  json config;  // parsed --config file, or empty object
};

std::string flag_key(std::string flag) {
  while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
  for (auto& ch : flag)
    if (ch == '-') ch = '_';
  return flag;
}

/// Config section for one subcommand (keyed by the subcommand's name).
const json* config_section(const json& config, const std::string& name) {
  if (config.is_object() && config.contains(name) && config.at(name).is_object())
    return &config.at(name);
  return nullptr;
}

/// Flags override config values: a config value applies only when the flag
/// was not passed on the command line.
template <class T>
void merge(const CLI::App& cmd, const json* section, const std::string& flag,
           T& value) {
  if (!section) return;
  const std::string key = flag_key(flag);
  if (cmd.count(flag) == 0 && section->contains(key))
    value = section->at(key).get<T>();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_config_echo(const Globals& g, const std::string& subcommand,
                       json params) {
  json echo;
  echo["subcommand"] = subcommand;
  echo["seed"] = g.seed;
  echo["out_dir"] = g.out_dir;
  echo["jobs"] = g.jobs;
  echo["params"] = std::move(params);
  std::string name = subcommand;
  for (auto& ch : name)
    if (ch == '-') ch = '_';
  write_json_file(fs::path(g.out_dir) / (name + "_config.json"), echo);
}

/// Distinct tickers appearing in a `date,ticker,adj_close` file, sorted for a
/// deterministic asset order. Full validation happens on load.
std::vector<std::string> discover_universe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open price file: " + path);
  std::string line;
  std::getline(in, line);  // header; validated by the loader
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    const std::string row = qpt::detail::trim(line);
    if (row.empty()) continue;
    const auto p1 = row.find(',');
    if (p1 == std::string::npos) continue;
    const auto p2 = row.find(',', p1 + 1);
    if (p2 == std::string::npos) continue;
    const std::string ticker = qpt::detail::trim(row.substr(p1 + 1, p2 - p1 - 1));
    if (!ticker.empty()) seen.insert(ticker);
  }
  if (seen.empty())
    throw std::runtime_error(path + ": no data rows to derive a universe from");
  return {seen.begin(), seen.end()};
}

/// Prices loaded and aligned, with quarter windows spanning every boundary
/// date in the panel and moments estimated over all of them.
struct Panel {
  std::vector<std::string> universe;
  std::vector<qpt::PriceSeries> series;
  std::vector<qpt::Date> boundaries;
  std::vector<qpt::QuarterWindow> windows;
  qpt::MomentEstimates moments;
};

Panel load_panel(const std::string& prices, std::vector<std::string> tickers) {
  if (prices.empty())
    throw std::runtime_error("no price file: pass --prices or set it in --config");
  Panel p;
  p.universe = tickers.empty() ? discover_universe(prices) : std::move(tickers);
  p.series = qpt::load_prices(prices, p.universe).series;
  for (const auto& [date, price] : p.series.front().observations)
    p.boundaries.push_back(date);
  if (p.boundaries.size() < 3)
    throw std::runtime_error(prices +
                             ": need at least 3 common dates to form return windows");
  p.windows = qpt::quarter_windows(p.boundaries);
  p.moments = qpt::estimate_moments(p.universe, qpt::returns_panel(p.series, p.windows));
  return p;
}

// ---- shared flag groups -------------------------------------------------------

void add_price_flags(CLI::App* sub, std::string& prices,
                     std::vector<std::string>& tickers) {
  sub->add_option("--prices", prices, "price CSV (date,ticker,adj_close)");
  sub->add_option("--tickers", tickers,
                  "universe subset (comma-separated; default: all tickers found)")
      ->delimiter(',');
}

void merge_price_flags(const CLI::App& sub, const json* sec, std::string& prices,
                       std::vector<std::string>& tickers) {
  merge(sub, sec, "--prices", prices);
  merge(sub, sec, "--tickers", tickers);
}

void add_encoding_flags(CLI::App* sub, qpt::EncodingParams& p) {
  sub->add_option("--k", p.k, "bits per asset weight (resolution 2^-k)");
  sub->add_option("--theta", p.theta, "risk-term scaling");
  sub->add_option("--m", p.m, "penalty coefficient (fallback where estimated)");
  sub->add_option("--target-return", p.target_return, "return floor R");
  sub->add_option("--penalty-sign", p.penalty_sign,
                  "+1 adds the squared violation, -1 mirrors the subtracted form")
      ->check(CLI::IsMember({1, -1}));
}

void merge_encoding_flags(const CLI::App& sub, const json* sec,
                          qpt::EncodingParams& p) {
  merge(sub, sec, "--k", p.k);
  merge(sub, sec, "--theta", p.theta);
  merge(sub, sec, "--m", p.m);
  merge(sub, sec, "--target-return", p.target_return);
  merge(sub, sec, "--penalty-sign", p.penalty_sign);
}

/// Unset schedule fields keep the probed/default value.
struct ScheduleFlags {
  std::int64_t sweeps = -1;
  double t_initial = -1.0;
  double t_final = -1.0;
  std::int64_t restarts = -1;
  std::int64_t patience = -1;
  std::int64_t max_stagnant_restarts = -1;
  bool trace = false;
};

void add_schedule_flags(CLI::App* sub, ScheduleFlags& f, bool with_trace = false) {
  sub->add_option("--sweeps", f.sweeps, "annealing sweeps per chain");
  sub->add_option("--t-initial", f.t_initial, "initial temperature");
  sub->add_option("--t-final", f.t_final, "final temperature");
  sub->add_option("--restarts", f.restarts, "independent chains");
  sub->add_option("--patience", f.patience,
                  "stop a chain after this many stale sweeps (0 = off)");
  sub->add_option("--max-stagnant-restarts", f.max_stagnant_restarts,
                  "stop the solve after this many restarts in a row without "
                  "a new best (0 = off)");
  if (with_trace)
    sub->add_flag("--trace", f.trace, "record the per-sweep best-energy trace");
}

void merge_schedule_flags(const CLI::App& sub, const json* sec, ScheduleFlags& f) {
  merge(sub, sec, "--sweeps", f.sweeps);
  merge(sub, sec, "--t-initial", f.t_initial);
  merge(sub, sec, "--t-final", f.t_final);
  merge(sub, sec, "--restarts", f.restarts);
  merge(sub, sec, "--patience", f.patience);
  merge(sub, sec, "--max-stagnant-restarts", f.max_stagnant_restarts);
  if (sec && sec->contains("trace") && sub.count("--trace") == 0)
    f.trace = sec->at("trace").get<bool>();
}

/// Starts from a probe of the model's own coefficient scale (or the plain
/// defaults without one) and applies whatever the user pinned down.
qpt::AnnealSchedule resolve_schedule(const ScheduleFlags& f,
                                     const qpt::QuboModel* probe,
                                     std::uint64_t seed) {
  qpt::AnnealSchedule s = probe ? qpt::default_schedule(*probe, seed)
                                : qpt::AnnealSchedule{};
  s.seed = seed;
  if (f.sweeps >= 0) s.sweeps = static_cast<std::size_t>(f.sweeps);
  if (f.t_initial >= 0.0) s.t_initial = f.t_initial;
  if (f.t_final >= 0.0) s.t_final = f.t_final;
  if (f.restarts >= 0) s.restarts = static_cast<std::size_t>(f.restarts);
  if (f.patience >= 0) s.patience = static_cast<std::size_t>(f.patience);
  if (f.max_stagnant_restarts >= 0)
    s.max_stagnant_restarts = static_cast<std::size_t>(f.max_stagnant_restarts);
  s.record_trace = f.trace;
  return s;
}

json dates_to_json(const std::vector<qpt::Date>& dates) {
  json out = json::array();
  for (const auto& d : dates) out.push_back(qpt::format_date(d));
  return out;
}

// ---- subcommand runners -------------------------------------------------------

int run_ingest(const Globals& g, const std::string& prices,
               const std::vector<std::string>& tickers) {
  const Panel p = load_panel(prices, tickers);
  json j = qpt::moments_to_json(p.moments);
  j["num_assets"] = p.universe.size();
  j["num_windows"] = p.windows.size();
  j["boundaries"] = dates_to_json(p.boundaries);
  const fs::path out = fs::path(g.out_dir) / "moments.json";
  write_json_file(out, j);
  write_config_echo(g, "ingest", {{"prices", prices}, {"tickers", p.universe}});
  std::printf("ingest: %zu assets, %zu windows -> %s\n", p.universe.size(),
              p.windows.size(), out.string().c_str());
  return 0;
}

int run_frontier(const Globals& g, const std::string& prices,
                 const std::vector<std::string>& tickers, int points, double tol) {
  const Panel p = load_panel(prices, tickers);
  const auto trace = qpt::trace_frontier(p.moments, static_cast<std::size_t>(points), tol);
  write_json_file(fs::path(g.out_dir) / "frontier.json", qpt::frontier_to_json(trace));
  write_text_file(fs::path(g.out_dir) / "frontier.csv", qpt::frontier_to_csv(trace));
  write_config_echo(g, "frontier",
                    {{"prices", prices},
                     {"tickers", p.universe},
                     {"points", points},
                     {"tol", tol}});
  std::printf("frontier: %zu points over [%.6g, %.6g] -> %s/frontier.{json,csv}\n",
              trace.points.size(), trace.r_min, trace.r_max, g.out_dir.c_str());
  return 0;
}

int run_estimate_m(const Globals& g, const std::string& prices,
                   const std::vector<std::string>& tickers, std::size_t n_samples,
                   bool selection, const qpt::EncodingParams& enc) {
  const Panel p = load_panel(prices, tickers);
  qpt::EncodingParams bare = enc;
  bare.m = 0.0;  // estimate against the risk term alone
  const qpt::QuboModel h = selection
                               ? qpt::build_selection_qubo(p.moments, bare).model
                               : qpt::build_fractional_qubo(p.moments, bare).model;
  const qpt::ConstraintSpec c =
      selection ? qpt::selection_return_constraint(p.moments, enc.target_return)
                : qpt::fractional_return_constraint(p.moments, enc);
  const std::size_t samples =
      n_samples ? n_samples : qpt::default_num_samples(h.num_vars());
  const auto est = qpt::estimate_penalty(h, c, samples, g.seed);
  if (!est.bound_derived)
    std::fprintf(stderr,
                 "warning: no usable candidate pair in %zu samples; downstream "
                 "runs will need an explicit --m\n",
                 est.samples_drawn);
  json j = {{"bound_derived", est.bound_derived},
            {"m_lower", est.m_lower},
            {"num_candidates", est.num_candidates},
            {"samples_drawn", est.samples_drawn},
            {"seed", est.seed},
            {"energy_from", est.energy_from},
            {"residual_from", est.residual_from},
            {"num_vars", h.num_vars()},
            {"selection", selection}};
  const fs::path out = fs::path(g.out_dir) / "estimate_m.json";
  write_json_file(out, j);
  write_config_echo(g, "estimate-m",
                    {{"prices", prices},
                     {"tickers", p.universe},
                     {"n_samples", samples},
                     {"selection", selection},
                     {"encoding", qpt::encoding_params_to_json(enc)}});
  std::printf("estimate-m: bound_derived=%s m_lower=%.17g candidates=%zu -> %s\n",
              est.bound_derived ? "true" : "false", est.m_lower,
              est.num_candidates, out.string().c_str());
  return 0;
}

int run_solve(const Globals& g, const std::string& model_path,
              const std::string& prices, const std::vector<std::string>& tickers,
              const qpt::EncodingParams& enc, const ScheduleFlags& sf) {
  json echo_source;
  Panel p;
  const bool from_prices = model_path.empty();
  const qpt::QuboModel model = [&] {
    if (!from_prices) {
      std::ifstream in(model_path);
      if (!in) throw std::runtime_error("cannot open model file: " + model_path);
      echo_source = {{"model", model_path}};
      return qpt::qubo_from_json(json::parse(in));
    }
    p = load_panel(prices, tickers);
    echo_source = {{"prices", prices},
                   {"tickers", p.universe},
                   {"encoding", qpt::encoding_params_to_json(enc)}};
    return qpt::build_fractional_qubo(p.moments, enc).model;
  }();
  const auto schedule = resolve_schedule(sf, &model, g.seed);
  const auto result = qpt::solve(model, schedule);

  json j = {{"num_vars", model.num_vars()},
            {"energy", result.energy},
            {"wall_time", result.wall_time},
            {"restarts_completed", result.restarts_completed}};
  json best = json::array();
  for (auto bit : result.best) best.push_back(static_cast<int>(bit));
  j["best"] = std::move(best);
  if (schedule.record_trace) j["energy_trace"] = result.energy_trace;
  if (from_prices) {
    const auto sol = qpt::decode(result.best, p.moments, enc, result.energy);
    json portfolio = {{"all_zero", sol.all_zero},
                      {"normalized_weights", sol.normalized_weights}};
    if (sol.all_zero) {
      portfolio["expected_return"] = nullptr;
      portfolio["variance"] = nullptr;
    } else {
      portfolio["expected_return"] = sol.expected_return;
      portfolio["variance"] = sol.variance;
    }
    j["portfolio"] = std::move(portfolio);
  }
  const fs::path out = fs::path(g.out_dir) / "solve.json";
  write_json_file(out, j);
  echo_source["schedule"] = qpt::schedule_to_json(schedule);
  write_config_echo(g, "solve", echo_source);
  std::printf("solve: %zu vars, energy %.17g in %.3fs -> %s\n", model.num_vars(),
              result.energy, result.wall_time, out.string().c_str());
  return 0;
}

int run_slice(const Globals& g, const std::string& prices,
              const std::vector<std::string>& tickers, double b_low, double b_high,
              std::size_t samples, bool exhaustive, std::size_t alg1_samples,
              const qpt::EncodingParams& enc, const ScheduleFlags& sf) {
  const Panel p = load_panel(prices, tickers);
  const double lo = std::isnan(b_low) ? p.moments.expected_returns.minCoeff() : b_low;
  const double hi = std::isnan(b_high) ? p.moments.expected_returns.maxCoeff() : b_high;

  qpt::EncodingParams probe_params = enc;
  probe_params.target_return = 0.5 * (lo + hi);
  const auto probe = qpt::build_fractional_qubo(p.moments, probe_params).model;
  const auto schedule = resolve_schedule(sf, &probe, g.seed);

  const auto dots = qpt::slicing_range_experiment(p.moments, lo, hi, samples, enc,
                                                  schedule, g.seed, exhaustive,
                                                  alg1_samples);
  write_json_file(fs::path(g.out_dir) / "slice.json", qpt::slice_to_json(dots));
  write_text_file(fs::path(g.out_dir) / "slice.csv", qpt::slice_to_csv(dots));
  write_config_echo(g, "slice",
                    {{"prices", prices},
                     {"tickers", p.universe},
                     {"b_low", lo},
                     {"b_high", hi},
                     {"samples", samples},
                     {"exhaustive", exhaustive},
                     {"alg1_samples", alg1_samples},
                     {"encoding", qpt::encoding_params_to_json(enc)},
                     {"schedule", qpt::schedule_to_json(schedule)}});
  std::size_t valid = 0;
  for (const auto& d : dots) valid += d.valid;
  std::printf("slice: %zu dots (%zu valid) over [%.6g, %.6g] -> %s/slice.{json,csv}\n",
              dots.size(), valid, lo, hi, g.out_dir.c_str());
  return 0;
}

int run_two_stage(const Globals& g, const std::string& prices,
                  const std::vector<std::string>& tickers, std::size_t runs,
                  bool compat_overwrite, bool random_targets,
                  const qpt::EncodingParams& enc, const ScheduleFlags& sf) {
  const Panel p = load_panel(prices, tickers);
  const auto probe = qpt::build_fractional_qubo(p.moments, enc).model;
  const auto schedule = resolve_schedule(sf, &probe, g.seed);
  const auto rows = qpt::run_two_stage_batch(p.moments, enc, schedule, g.seed, runs,
                                             compat_overwrite, random_targets);
  const fs::path out = fs::path(g.out_dir) / "two_stage.json";
  write_json_file(out, qpt::two_stage_batch_to_json(rows));
  write_config_echo(g, "two-stage",
                    {{"prices", prices},
                     {"tickers", p.universe},
                     {"runs", runs},
                     {"compat_overwrite", compat_overwrite},
                     {"random_targets", random_targets},
                     {"encoding", qpt::encoding_params_to_json(enc)},
                     {"schedule", qpt::schedule_to_json(schedule)}});
  std::vector<double> ratios;
  for (const auto& r : rows) ratios.push_back(r.improvement_ratio);
  std::printf("two-stage: %zu runs, median improvement ratio %.3f -> %s\n",
              rows.size(), qpt::median(ratios), out.string().c_str());
  return 0;
}

int run_sweep_cmd(const Globals& g, const std::string& prices,
                  const std::vector<std::string>& tickers, std::vector<int> k_set,
                  std::vector<double> theta_set,
                  const std::vector<std::string>& order_names,
                  std::size_t runs_per_cell, double theta_ref,
                  std::size_t alg1_samples, const qpt::EncodingParams& enc,
                  const ScheduleFlags& sf) {
  const Panel p = load_panel(prices, tickers);
  qpt::SweepSpec spec;
  spec.k_set = std::move(k_set);
  spec.theta_set = std::move(theta_set);
  spec.orders.clear();
  for (const auto& name : order_names) {
    if (name == "linear")
      spec.orders.push_back(qpt::MOrder::linear);
    else if (name == "n_log_n")
      spec.orders.push_back(qpt::MOrder::n_log_n);
    else if (name == "quadratic")
      spec.orders.push_back(qpt::MOrder::quadratic);
    else
      throw std::runtime_error("unknown order '" + name +
                               "' (expected linear, n_log_n, or quadratic)");
  }
  spec.runs_per_cell = runs_per_cell;
  spec.theta_ref = theta_ref;
  spec.alg1_samples = alg1_samples;
  spec.base = enc;
  spec.schedule = resolve_schedule(sf, nullptr, g.seed);
  // Explicit temperatures pin every cell; otherwise each cell probes its own.
  spec.auto_temperature = sf.t_initial < 0.0 && sf.t_final < 0.0;
  spec.jobs = g.jobs;

  const auto cells = qpt::run_sweep(p.moments, spec, g.seed);
  write_json_file(fs::path(g.out_dir) / "sweep.json", qpt::sweep_to_json(cells));
  write_text_file(fs::path(g.out_dir) / "sweep.csv", qpt::sweep_to_csv(cells));

  json order_echo = json::array();
  for (const auto& o : spec.orders) order_echo.push_back(qpt::m_order_name(o));
  write_config_echo(g, "sweep",
                    {{"prices", prices},
                     {"tickers", p.universe},
                     {"k_set", spec.k_set},
                     {"theta_set", spec.theta_set},
                     {"orders", order_echo},
                     {"runs_per_cell", spec.runs_per_cell},
                     {"theta_ref", spec.theta_ref},
                     {"alg1_samples", spec.alg1_samples},
                     {"auto_temperature", spec.auto_temperature},
                     {"base", qpt::encoding_params_to_json(spec.base)},
                     {"schedule", qpt::schedule_to_json(spec.schedule)}});
  std::size_t nulls = 0, flagged = 0;
  for (const auto& c : cells) {
    nulls += c.null_results;
    flagged += !c.precision_ok;
  }
  std::printf(
      "sweep: %zu cells (%zu precision-flagged), %zu null results -> "
      "%s/sweep.{json,csv}\n",
      cells.size(), flagged, nulls, g.out_dir.c_str());
  return 0;
}

int run_backtest_cmd(const Globals& g, const std::string& prices,
                     const std::vector<std::string>& tickers,
                     const std::string& strategy_name, int task_rank,
                     double risk_free, std::size_t count, bool exhaustive,
                     const qpt::EncodingParams& enc, const ScheduleFlags& sf) {
  const Panel p = load_panel(prices, tickers);
  qpt::StrategySpec strategy;
  strategy.kind = strategy_name == "sticky" ? qpt::StrategyKind::sticky
                                            : qpt::StrategyKind::always_rebalance;
  strategy.task_rank = task_rank;

  const auto probe = qpt::build_fractional_qubo(p.moments, enc).model;
  const auto schedule = resolve_schedule(sf, &probe, g.seed);
  const auto report = qpt::run_backtest(p.series, p.windows, strategy, enc, schedule,
                                        g.seed, risk_free, count, exhaustive);
  write_json_file(fs::path(g.out_dir) / "backtest.json",
                  qpt::backtest_report_to_json(report));
  write_text_file(fs::path(g.out_dir) / "backtest.csv",
                  qpt::backtest_report_to_csv(report));
  write_config_echo(g, "backtest",
                    {{"prices", prices},
                     {"tickers", p.universe},
                     {"strategy", strategy_name},
                     {"task_rank", task_rank},
                     {"risk_free", risk_free},
                     {"count", count},
                     {"exhaustive", exhaustive},
                     {"encoding", qpt::encoding_params_to_json(enc)},
                     {"schedule", qpt::schedule_to_json(schedule)}});
  std::printf("backtest: %zu quarters, additive total return %.6g -> "
              "%s/backtest.{json,csv}\n",
              report.rows.size(), report.total_return, g.out_dir.c_str());
  return 0;
}

int run_emit_plots(const Globals& g, const std::string& results) {
  const std::string source = results.empty() ? g.out_dir : results;
  const auto manifest = qpt::emit_plots(source, g.out_dir);
  write_config_echo(g, "emit-plots", {{"results", source}});
  std::printf("emit-plots: %zu figure families -> %s/manifest.json\n",
              manifest.at("families").size(), g.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "qpt: mean-variance portfolios as binary quadratic models - encoding, "
      "penalty estimation, annealing, experiments, and backtests"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path,
                 "JSON config file; explicit flags override its values");
  app.add_option("--seed", g.seed, "global RNG seed (default 0)");
  app.add_option("--out-dir", g.out_dir, "output directory (default qpt_out)");
  app.add_option("--jobs", g.jobs, "worker threads for sweep cells")
      ->check(CLI::PositiveNumber);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load prices and emit moment estimates");
  ingest->fallthrough();
  std::string in_prices;
  std::vector<std::string> in_tickers;
  add_price_flags(ingest, in_prices, in_tickers);

  // frontier
  auto* frontier = app.add_subcommand("frontier", "trace the continuous efficient frontier");
  frontier->fallthrough();
  std::string fr_prices;
  std::vector<std::string> fr_tickers;
  int fr_points = 50;
  double fr_tol = 1e-9;
  add_price_flags(frontier, fr_prices, fr_tickers);
  frontier->add_option("--points", fr_points, "frontier sample count")
      ->check(CLI::Range(2, 100000));
  frontier->add_option("--tol", fr_tol, "active-set solver tolerance");

  // slice
  auto* slice = app.add_subcommand(
      "slice", "solve across a band of return floors and score each dot");
  slice->fallthrough();
  std::string sl_prices;
  std::vector<std::string> sl_tickers;
  double sl_b_low = std::numeric_limits<double>::quiet_NaN();
  double sl_b_high = std::numeric_limits<double>::quiet_NaN();
  std::size_t sl_samples = 30;
  bool sl_exhaustive = false;
  std::size_t sl_alg1 = 0;
  qpt::EncodingParams sl_enc;
  ScheduleFlags sl_sched;
  add_price_flags(slice, sl_prices, sl_tickers);
  slice->add_option("--b-low", sl_b_low, "band lower edge (default: min asset return)");
  slice->add_option("--b-high", sl_b_high, "band upper edge (default: max asset return)");
  slice->add_option("--samples", sl_samples, "number of evenly spaced floors");
  slice->add_flag("--exhaustive", sl_exhaustive,
                  "enumerate assignments instead of annealing (small models)");
  slice->add_option("--alg1-samples", sl_alg1,
                    "penalty-bound sample count (0 = size-based default)");
  add_encoding_flags(slice, sl_enc);
  add_schedule_flags(slice, sl_sched);

  // estimate-m
  auto* estimate = app.add_subcommand(
      "estimate-m", "sample a penalty-coefficient lower bound");
  estimate->fallthrough();
  std::string em_prices;
  std::vector<std::string> em_tickers;
  std::size_t em_samples = 0;
  bool em_selection = false;
  qpt::EncodingParams em_enc;
  add_price_flags(estimate, em_prices, em_tickers);
  estimate->add_option("--n-samples", em_samples,
                       "random assignments to draw (0 = size-based default)");
  estimate->add_flag("--selection", em_selection,
                     "estimate for the one-bit-per-asset selection model");
  add_encoding_flags(estimate, em_enc);

  // solve
  auto* solve = app.add_subcommand("solve", "anneal one model and report the best state");
  solve->fallthrough();
  std::string so_model, so_prices;
  std::vector<std::string> so_tickers;
  qpt::EncodingParams so_enc;
  ScheduleFlags so_sched;
  solve->add_option("--model", so_model,
                    "QUBO JSON file {n, linear, quadratic_upper}; overrides --prices");
  add_price_flags(solve, so_prices, so_tickers);
  add_encoding_flags(solve, so_enc);
  add_schedule_flags(solve, so_sched, /*with_trace=*/true);

  // two-stage
  auto* two_stage = app.add_subcommand(
      "two-stage", "compare direct solves against selection-preprocessed solves");
  two_stage->fallthrough();
  std::string ts_prices;
  std::vector<std::string> ts_tickers;
  std::size_t ts_runs = 20;
  bool ts_compat = false;
  bool ts_random_targets = false;
  qpt::EncodingParams ts_enc;
  ScheduleFlags ts_sched;
  add_price_flags(two_stage, ts_prices, ts_tickers);
  two_stage->add_option("--runs", ts_runs, "comparison repetitions");
  two_stage->add_flag("--compat-overwrite", ts_compat,
                      "reproduce the overwrite quirk: only the last selected asset "
                      "keeps its block adjustment");
  two_stage->add_flag("--random-targets", ts_random_targets,
                      "draw each run's return floor from the achievable range");
  add_encoding_flags(two_stage, ts_enc);
  add_schedule_flags(two_stage, ts_sched);

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "grid over (K, theta, penalty order) with per-cell null accounting");
  sweep->fallthrough();
  std::string sw_prices;
  std::vector<std::string> sw_tickers;
  std::vector<int> sw_k_set{5, 10, 20};
  std::vector<double> sw_theta_set{32.0, 1024.0, 32768.0};
  std::vector<std::string> sw_orders{"linear", "n_log_n", "quadratic"};
  std::size_t sw_runs = 5;
  double sw_theta_ref = 1024.0;
  std::size_t sw_alg1 = 4000;
  qpt::EncodingParams sw_enc;
  ScheduleFlags sw_sched;
  add_price_flags(sweep, sw_prices, sw_tickers);
  sweep->add_option("--k-set", sw_k_set, "bit-depth grid")->delimiter(',');
  sweep->add_option("--theta-set", sw_theta_set, "risk-scale grid")->delimiter(',');
  sweep->add_option("--orders", sw_orders,
                    "penalty growth orders: linear, n_log_n, quadratic")
      ->delimiter(',');
  sweep->add_option("--runs-per-cell", sw_runs, "seeded solves per cell");
  sweep->add_option("--theta-ref", sw_theta_ref,
                    "theta where all orders share the anchored penalty");
  sweep->add_option("--alg1-samples", sw_alg1,
                    "sample count for the per-K anchor estimate");
  add_encoding_flags(sweep, sw_enc);
  add_schedule_flags(sweep, sw_sched);

  // backtest
  auto* backtest = app.add_subcommand(
      "backtest", "quarterly rebalancing simulation with Sharpe-ranked candidates");
  backtest->fallthrough();
  std::string bt_prices;
  std::vector<std::string> bt_tickers;
  std::string bt_strategy = "always";
  int bt_rank = 1;
  double bt_risk_free = 0.0;
  std::size_t bt_count = 20;
  bool bt_exhaustive = false;
  qpt::EncodingParams bt_enc;
  ScheduleFlags bt_sched;
  add_price_flags(backtest, bt_prices, bt_tickers);
  backtest->add_option("--strategy", bt_strategy, "always | sticky")
      ->check(CLI::IsMember({"always", "sticky"}));
  backtest->add_option("--task-rank", bt_rank, "Sharpe rank to hold (1-3)")
      ->check(CLI::Range(1, 3));
  backtest->add_option("--risk-free", bt_risk_free, "per-quarter risk-free rate");
  backtest->add_option("--count", bt_count, "candidate configurations per quarter");
  backtest->add_flag("--exhaustive", bt_exhaustive,
                     "enumerate assignments for candidates (small models)");
  add_encoding_flags(backtest, bt_enc);
  add_schedule_flags(backtest, bt_sched);

  // emit-plots
  auto* emit = app.add_subcommand(
      "emit-plots", "reshape experiment outputs into per-figure CSV files");
  emit->fallthrough();
  std::string ep_results;
  emit->add_option("--results", ep_results,
                   "directory holding the experiment JSON files (default: --out-dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!g.config_path.empty()) {
      std::ifstream in(g.config_path);
      if (!in) throw std::runtime_error("cannot open config file: " + g.config_path);
      g.config = json::parse(in);
      if (!g.config.is_object())
        throw std::runtime_error(g.config_path + ": config root must be an object");
      if (app.count("--seed") == 0 && g.config.contains("seed"))
        g.seed = g.config.at("seed").get<std::uint64_t>();
      if (app.count("--out-dir") == 0 && g.config.contains("out_dir"))
        g.out_dir = g.config.at("out_dir").get<std::string>();
      if (app.count("--jobs") == 0 && g.config.contains("jobs"))
        g.jobs = g.config.at("jobs").get<std::size_t>();
    }
    fs::create_directories(g.out_dir);

    if (ingest->parsed()) {
      const json* sec = config_section(g.config, "ingest");
      merge_price_flags(*ingest, sec, in_prices, in_tickers);
      return run_ingest(g, in_prices, in_tickers);
    }
    if (frontier->parsed()) {
      const json* sec = config_section(g.config, "frontier");
      merge_price_flags(*frontier, sec, fr_prices, fr_tickers);
      merge(*frontier, sec, "--points", fr_points);
      merge(*frontier, sec, "--tol", fr_tol);
      return run_frontier(g, fr_prices, fr_tickers, fr_points, fr_tol);
    }
    if (slice->parsed()) {
      const json* sec = config_section(g.config, "slice");
      merge_price_flags(*slice, sec, sl_prices, sl_tickers);
      merge(*slice, sec, "--b-low", sl_b_low);
      merge(*slice, sec, "--b-high", sl_b_high);
      merge(*slice, sec, "--samples", sl_samples);
      merge(*slice, sec, "--exhaustive", sl_exhaustive);
      merge(*slice, sec, "--alg1-samples", sl_alg1);
      merge_encoding_flags(*slice, sec, sl_enc);
      merge_schedule_flags(*slice, sec, sl_sched);
      return run_slice(g, sl_prices, sl_tickers, sl_b_low, sl_b_high, sl_samples,
                       sl_exhaustive, sl_alg1, sl_enc, sl_sched);
    }
    if (estimate->parsed()) {
      const json* sec = config_section(g.config, "estimate-m");
      merge_price_flags(*estimate, sec, em_prices, em_tickers);
      merge(*estimate, sec, "--n-samples", em_samples);
      merge(*estimate, sec, "--selection", em_selection);
      merge_encoding_flags(*estimate, sec, em_enc);
      return run_estimate_m(g, em_prices, em_tickers, em_samples, em_selection,
                            em_enc);
    }
    if (solve->parsed()) {
      const json* sec = config_section(g.config, "solve");
      merge(*solve, sec, "--model", so_model);
      merge_price_flags(*solve, sec, so_prices, so_tickers);
      merge_encoding_flags(*solve, sec, so_enc);
      merge_schedule_flags(*solve, sec, so_sched);
      return run_solve(g, so_model, so_prices, so_tickers, so_enc, so_sched);
    }
    if (two_stage->parsed()) {
      const json* sec = config_section(g.config, "two-stage");
      merge_price_flags(*two_stage, sec, ts_prices, ts_tickers);
      merge(*two_stage, sec, "--runs", ts_runs);
      merge(*two_stage, sec, "--compat-overwrite", ts_compat);
      merge(*two_stage, sec, "--random-targets", ts_random_targets);
      merge_encoding_flags(*two_stage, sec, ts_enc);
      merge_schedule_flags(*two_stage, sec, ts_sched);
      return run_two_stage(g, ts_prices, ts_tickers, ts_runs, ts_compat,
                           ts_random_targets, ts_enc, ts_sched);
    }
    if (sweep->parsed()) {
      const json* sec = config_section(g.config, "sweep");
      merge_price_flags(*sweep, sec, sw_prices, sw_tickers);
      merge(*sweep, sec, "--k-set", sw_k_set);
      merge(*sweep, sec, "--theta-set", sw_theta_set);
      merge(*sweep, sec, "--orders", sw_orders);
      merge(*sweep, sec, "--runs-per-cell", sw_runs);
      merge(*sweep, sec, "--theta-ref", sw_theta_ref);
      merge(*sweep, sec, "--alg1-samples", sw_alg1);
      merge_encoding_flags(*sweep, sec, sw_enc);
      merge_schedule_flags(*sweep, sec, sw_sched);
      return run_sweep_cmd(g, sw_prices, sw_tickers, sw_k_set, sw_theta_set,
                           sw_orders, sw_runs, sw_theta_ref, sw_alg1, sw_enc,
                           sw_sched);
    }
    if (backtest->parsed()) {
      const json* sec = config_section(g.config, "backtest");
      merge_price_flags(*backtest, sec, bt_prices, bt_tickers);
      merge(*backtest, sec, "--strategy", bt_strategy);
      merge(*backtest, sec, "--task-rank", bt_rank);
      merge(*backtest, sec, "--risk-free", bt_risk_free);
      merge(*backtest, sec, "--count", bt_count);
      merge(*backtest, sec, "--exhaustive", bt_exhaustive);
      merge_encoding_flags(*backtest, sec, bt_enc);
      merge_schedule_flags(*backtest, sec, bt_sched);
      return run_backtest_cmd(g, bt_prices, bt_tickers, bt_strategy, bt_rank,
                              bt_risk_free, bt_count, bt_exhaustive, bt_enc,
                              bt_sched);
    }
    if (emit->parsed()) {
      const json* sec = config_section(g.config, "emit-plots");
      merge(*emit, sec, "--results", ep_results);
      return run_emit_plots(g, ep_results);
    }
    throw std::runtime_error("no subcommand selected");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
