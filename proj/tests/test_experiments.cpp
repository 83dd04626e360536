// Experiment drivers: the slicing dot cloud is checked against an exhaustive
// closed-form-objective oracle and the continuous-frontier dominance bound;
// the parameter sweep's order anchoring, precision gating, null accounting,
// and serialization are exercised on small grids; two-stage batches and the
// plot emitter round-trip through their canonical JSON files.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qpt/experiments.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

qpt::AnnealSchedule light_schedule() {
  qpt::AnnealSchedule s;
  s.sweeps = 300;
  s.t_initial = 1.0;
  s.t_final = 1e-3;
  s.restarts = 2;
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("median of a sample", "[experiments]") {
  REQUIRE(qpt::median({3.0}) == 3.0);
  REQUIRE(qpt::median({5.0, 1.0, 3.0}) == 3.0);
  REQUIRE(qpt::median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  REQUIRE(qpt::median({-1.0, -1.0, 7.0}) == -1.0);
  REQUIRE_THROWS_AS(qpt::median({}), std::invalid_argument);
}

TEST_CASE("slicing validates its inputs", "[experiments]") {
  const auto m = qpt_test::random_moments(3, 11);
  const double r_lo = m.expected_returns.minCoeff();
  const double r_hi = m.expected_returns.maxCoeff();
  qpt::EncodingParams params;
  params.k = 2;
  const auto sched = light_schedule();

  REQUIRE_THROWS_AS(
      qpt::slicing_range_experiment(m, r_lo, r_hi, 0, params, sched, 1),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      qpt::slicing_range_experiment(m, r_hi, r_lo, 3, params, sched, 1),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      qpt::slicing_range_experiment(m, r_lo, r_hi + 1e-3, 3, params, sched, 1),
      std::invalid_argument);
  REQUIRE_THROWS_AS(
      qpt::slicing_range_experiment(m, r_lo - 1e-3, r_hi, 3, params, sched, 1),
      std::invalid_argument);
}

TEST_CASE("degenerate band yields a single dot at the low edge", "[experiments]") {
  const auto m = qpt_test::random_moments(3, 21);
  const double b = 0.5 * (m.expected_returns.minCoeff() + m.expected_returns.maxCoeff());
  qpt::EncodingParams params;
  params.k = 2;
  const auto dots = qpt::slicing_range_experiment(m, b, b, 1, params,
                                                  light_schedule(), 7, true);
  REQUIRE(dots.size() == 1);
  REQUIRE(dots[0].target_b == b);
  REQUIRE(dots[0].m_used > 0.0);
}

TEST_CASE("slice dots never beat the continuous frontier", "[experiments]") {
  const auto m = qpt_test::random_moments(2, 33);
  const double r_lo = m.expected_returns.minCoeff();
  const double r_hi = m.expected_returns.maxCoeff();
  qpt::EncodingParams params;
  params.k = 6;
  const auto dots = qpt::slicing_range_experiment(m, r_lo, r_hi, 7, params,
                                                  light_schedule(), 99, true);
  REQUIRE(dots.size() == 7);
  for (std::size_t j = 0; j < dots.size(); ++j) {
    const double expected_b =
        r_lo + (r_hi - r_lo) * static_cast<double>(j) / 6.0;
    REQUIRE_THAT(dots[j].target_b, WithinAbs(expected_b, 1e-15));
    REQUIRE(dots[j].valid);
    REQUIRE(dots[j].error >= -1e-6);
  }
}

TEST_CASE("exhaustive slice dot matches the closed-form objective minimizer",
          "[experiments]") {
  const auto m = qpt_test::random_moments(3, 55);
  const double r_lo = m.expected_returns.minCoeff();
  const double r_hi = m.expected_returns.maxCoeff();
  qpt::EncodingParams params;
  params.k = 2;
  params.theta = 3.0;
  const auto dots = qpt::slicing_range_experiment(m, r_lo, r_hi, 3, params,
                                                  light_schedule(), 42, true);
  REQUIRE(dots.size() == 3);
  for (const auto& dot : dots) {
    REQUIRE(dot.valid);
    // Oracle: enumerate every 6-bit assignment, score its decoded raw
    // weights with the explicit objective, and keep the first minimizer.
    qpt::EncodingParams pd = params;
    pd.target_return = dot.target_b;
    pd.m = dot.m_used;
    double best_obj = std::numeric_limits<double>::infinity();
    qpt::PortfolioSolution best_sol;
    for (std::uint64_t mask = 0; mask < 64; ++mask) {
      qpt::BinaryAssignment x(6, 0);
      for (std::size_t b = 0; b < 6; ++b) x[b] = (mask >> b) & 1u;
      const auto sol = qpt::decode(x, m, pd);
      const double obj = qpt::objective_value(sol.raw_weights, m, pd);
      if (obj < best_obj) {
        best_obj = obj;
        best_sol = sol;
      }
    }
    REQUIRE_FALSE(best_sol.all_zero);
    REQUIRE_THAT(dot.expected_return, WithinRel(best_sol.expected_return, 1e-12));
    REQUIRE_THAT(dot.variance, WithinRel(best_sol.variance, 1e-12));
  }
}

TEST_CASE("slice records per-dot failures without aborting", "[experiments]") {
  // One asset under the subtracted penalty form: any investment raises both
  // the risk term and the penalty term, so the empty portfolio is always the
  // exact minimizer and the dot must come back as a recorded failure.
  const auto m = qpt_test::random_moments(1, 77);
  const double r = m.expected_returns[0];
  qpt::EncodingParams params;
  params.k = 1;
  params.penalty_sign = -1;
  const auto dots = qpt::slicing_range_experiment(m, r, r, 1, params,
                                                  light_schedule(), 5, true);
  REQUIRE(dots.size() == 1);
  REQUIRE_FALSE(dots[0].valid);
  REQUIRE(dots[0].note == "all-zero decode");
  REQUIRE(std::isnan(dots[0].error));
  REQUIRE(std::isnan(dots[0].expected_return));
}

TEST_CASE("slice output is deterministic and serializes cleanly", "[experiments]") {
  const auto m = qpt_test::random_moments(3, 91);
  const double r_lo = m.expected_returns.minCoeff();
  const double r_hi = m.expected_returns.maxCoeff();
  qpt::EncodingParams params;
  params.k = 2;
  const auto a = qpt::slicing_range_experiment(m, r_lo, r_hi, 4, params,
                                               light_schedule(), 314);
  const auto b = qpt::slicing_range_experiment(m, r_lo, r_hi, 4, params,
                                               light_schedule(), 314);
  REQUIRE(qpt::slice_to_csv(a) == qpt::slice_to_csv(b));
  REQUIRE(qpt::slice_to_json(a).dump() == qpt::slice_to_json(b).dump());

  const std::string csv = qpt::slice_to_csv(a);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  REQUIRE(lines == 5);  // header + 4 dots
  const auto j = qpt::slice_to_json(a);
  REQUIRE(j.at("dots").size() == 4);
}

TEST_CASE("sweep validates its grid", "[experiments]") {
  const auto m = qpt_test::random_moments(3, 7);
  qpt::SweepSpec spec;
  spec.schedule = light_schedule();
  spec.base.target_return = m.expected_returns.mean();

  spec.theta_set = {};
  REQUIRE_THROWS_AS(qpt::run_sweep(m, spec, 1), std::invalid_argument);
  spec.theta_set = {4.0};
  spec.runs_per_cell = 0;
  REQUIRE_THROWS_AS(qpt::run_sweep(m, spec, 1), std::invalid_argument);
  spec.runs_per_cell = 1;
  spec.theta_ref = 1.0;
  REQUIRE_THROWS_AS(qpt::run_sweep(m, spec, 1), std::invalid_argument);
  spec.theta_ref = 8.0;
  spec.theta_set = {0.5};
  REQUIRE_THROWS_AS(qpt::run_sweep(m, spec, 1), std::invalid_argument);
}

TEST_CASE("one-cell sweep produces one row per run", "[experiments]") {
  const auto m = qpt_test::random_moments(4, 13);
  qpt::SweepSpec spec;
  spec.k_set = {3};
  spec.theta_set = {4.0};
  spec.orders = {qpt::MOrder::linear};
  spec.runs_per_cell = 2;
  spec.theta_ref = 4.0;
  spec.alg1_samples = 400;
  spec.base.target_return = m.expected_returns.mean();
  spec.schedule = light_schedule();

  const auto cells = qpt::run_sweep(m, spec, 2024);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].runs.size() == 2);
  REQUIRE(cells[0].precision_ok);
  REQUIRE(cells[0].m_used > 0.0);
  // theta == theta_ref, so the cell penalty is exactly the anchor estimate.
  REQUIRE_THAT(cells[0].anchor_c * 4.0, WithinRel(cells[0].m_used, 1e-15));

  const std::string csv = qpt::sweep_to_csv(cells);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  REQUIRE(lines == 3);  // header + 2 runs
  REQUIRE(csv.rfind("k,theta,m_order,anchor_c,m,precision_ok,run,", 0) == 0);

  const auto j = qpt::sweep_to_json(cells);
  REQUIRE(j.at("cells").size() == 1);
  REQUIRE(j.at("cells")[0].at("runs").size() == 2);
}

TEST_CASE("penalty orders agree at the reference theta and scale by their order",
          "[experiments]") {
  const auto m = qpt_test::random_moments(4, 17);
  qpt::SweepSpec spec;
  spec.k_set = {3};
  spec.theta_set = {8.0, 16.0};
  spec.orders = {qpt::MOrder::linear, qpt::MOrder::n_log_n, qpt::MOrder::quadratic};
  spec.runs_per_cell = 1;
  spec.theta_ref = 8.0;
  spec.alg1_samples = 400;
  spec.base.target_return = m.expected_returns.mean();
  spec.schedule = light_schedule();

  const auto cells = qpt::run_sweep(m, spec, 5);
  REQUIRE(cells.size() == 6);

  auto cell_at = [&](double theta, qpt::MOrder order) {
    for (const auto& c : cells)
      if (c.theta == theta && c.order == order) return c;
    FAIL("cell not found");
    return cells[0];
  };

  // At theta_ref every order reproduces the same anchor penalty.
  const double m_ref = cell_at(8.0, qpt::MOrder::linear).m_used;
  REQUIRE(m_ref > 0.0);
  REQUIRE_THAT(cell_at(8.0, qpt::MOrder::n_log_n).m_used, WithinRel(m_ref, 1e-12));
  REQUIRE_THAT(cell_at(8.0, qpt::MOrder::quadratic).m_used, WithinRel(m_ref, 1e-12));

  // Doubling theta scales each order by its own growth law.
  REQUIRE_THAT(cell_at(16.0, qpt::MOrder::linear).m_used,
               WithinRel(2.0 * m_ref, 1e-12));
  REQUIRE_THAT(cell_at(16.0, qpt::MOrder::n_log_n).m_used,
               WithinRel(m_ref * (16.0 * 4.0) / (8.0 * 3.0), 1e-12));
  REQUIRE_THAT(cell_at(16.0, qpt::MOrder::quadratic).m_used,
               WithinRel(4.0 * m_ref, 1e-12));
}

TEST_CASE("precision-flagged sweep cell is kept as an all-null cell",
          "[experiments]") {
  const auto& m = qpt_test::fixture_moments();
  qpt::SweepSpec spec;
  spec.k_set = {10};
  spec.theta_set = {std::ldexp(1.0, 25)};
  spec.orders = {qpt::MOrder::linear};
  spec.runs_per_cell = 2;
  spec.alg1_samples = 300;
  spec.base.target_return = 0.03;
  spec.schedule = light_schedule();

  const auto cells = qpt::run_sweep(m, spec, 404);
  REQUIRE(cells.size() == 1);
  const auto& cell = cells[0];
  REQUIRE_FALSE(cell.precision_ok);
  REQUIRE(cell.offending_terms > 0);
  REQUIRE(cell.null_results == 2);
  for (const auto& run : cell.runs) {
    REQUIRE(run.null_result);
    REQUIRE(run.null_reason == "precision");
    REQUIRE(std::isnan(run.frontier_error));
  }
  // The run rows keep their slot in the long-format CSV with empty metrics.
  const std::string csv = qpt::sweep_to_csv(cells);
  REQUIRE_THAT(csv, ContainsSubstring(",1,precision,,,\n"));
}

TEST_CASE("all-zero decodes are counted as null sweep results", "[experiments]") {
  // Single asset under the subtracted penalty form: the empty portfolio is
  // always the exact minimizer, so every run must come back null.
  const auto m = qpt_test::random_moments(1, 23);
  qpt::SweepSpec spec;
  spec.k_set = {1};
  spec.theta_set = {4.0};
  spec.orders = {qpt::MOrder::linear};
  spec.runs_per_cell = 2;
  spec.theta_ref = 4.0;
  spec.alg1_samples = 200;
  spec.base.target_return = m.expected_returns[0];
  spec.base.penalty_sign = -1;
  spec.schedule = light_schedule();

  const auto cells = qpt::run_sweep(m, spec, 88);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].precision_ok);
  REQUIRE(cells[0].null_results == 2);
  for (const auto& run : cells[0].runs) {
    REQUIRE(run.null_result);
    REQUIRE(run.null_reason == "all-zero decode");
  }
}

TEST_CASE("sweep output is deterministic for a fixed seed", "[experiments]") {
  const auto m = qpt_test::random_moments(4, 29);
  qpt::SweepSpec spec;
  spec.k_set = {2, 3};
  spec.theta_set = {4.0};
  spec.orders = {qpt::MOrder::linear, qpt::MOrder::quadratic};
  spec.runs_per_cell = 2;
  spec.theta_ref = 4.0;
  spec.alg1_samples = 300;
  spec.base.target_return = m.expected_returns.mean();
  spec.schedule = light_schedule();

  const auto a = qpt::run_sweep(m, spec, 777);
  const auto b = qpt::run_sweep(m, spec, 777);
  REQUIRE(qpt::sweep_to_csv(a) == qpt::sweep_to_csv(b));
  REQUIRE(qpt::sweep_to_json(a).dump() == qpt::sweep_to_json(b).dump());
  REQUIRE(a.size() == 4);

  // The worker count shapes scheduling only, never the results.
  spec.jobs = 3;
  const auto parallel = qpt::run_sweep(m, spec, 777);
  REQUIRE(qpt::sweep_to_csv(parallel) == qpt::sweep_to_csv(a));
}

TEST_CASE("two-stage batch is seeded, shaped, and deterministic", "[experiments]") {
  const auto m = qpt_test::head_moments(qpt_test::fixture_moments(), 4);
  qpt::EncodingParams params;
  params.k = 2;
  params.theta = 1.0;
  params.m = 20.0;
  params.target_return = 0.03;
  const auto sched = light_schedule();

  REQUIRE_THROWS_AS(qpt::run_two_stage_batch(m, params, sched, 1, 0),
                    std::invalid_argument);

  const auto rows = qpt::run_two_stage_batch(m, params, sched, 61, 3);
  REQUIRE(rows.size() == 3);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    REQUIRE(rows[r].run == r);
    REQUIRE(rows[r].improvement_ratio > 0.0);
    REQUIRE(rows[r].with_stats.wall_time > 0.0);
    REQUIRE(rows[r].without_stats.wall_time > 0.0);
    REQUIRE(std::isfinite(rows[r].with_stats.energy));
    REQUIRE(rows[r].with_stats.valid !=
            std::isnan(rows[r].with_stats.frontier_error));
    REQUIRE(rows[r].without_stats.valid !=
            std::isnan(rows[r].without_stats.frontier_error));
  }

  // Solutions and selections re-run identically; wall times legitimately move.
  const auto again = qpt::run_two_stage_batch(m, params, sched, 61, 3);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    REQUIRE(again[r].selected_count == rows[r].selected_count);
    REQUIRE(again[r].with_stats.energy == rows[r].with_stats.energy);
    REQUIRE(again[r].without_stats.energy == rows[r].without_stats.energy);
  }
  const auto j = qpt::two_stage_batch_to_json(rows);
  REQUIRE(j.at("runs").size() == 3);
}

TEST_CASE("plot emission requires at least one experiment output", "[experiments]") {
  const auto results = fresh_dir("qpt_plots_empty_results");
  const auto out = fresh_dir("qpt_plots_empty_out");
  try {
    qpt::emit_plots(results, out);
    FAIL("expected a missing-inputs error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    for (const char* name : {"frontier.json", "slice.json", "sweep.json",
                             "backtest.json", "two_stage.json"})
      REQUIRE_THAT(msg, ContainsSubstring(name));
  }
}

TEST_CASE("frontier-only emission produces a single figure family", "[experiments]") {
  const auto m = qpt_test::random_moments(4, 47);
  const auto trace = qpt::trace_frontier(m, 9);
  const auto results = fresh_dir("qpt_plots_frontier_results");
  const auto out = fresh_dir("qpt_plots_frontier_out");
  {
    std::ofstream f(results / "frontier.json");
    f << qpt::frontier_to_json(trace).dump(2);
  }
  const auto manifest = qpt::emit_plots(results, out);
  REQUIRE(manifest.at("families").size() == 1);
  REQUIRE(manifest.at("families")[0].at("name") == "frontier_trace");
  REQUIRE(manifest.at("families")[0].at("rows") == 9);
  REQUIRE(fs::exists(out / "fig_frontier_trace.csv"));
  REQUIRE(fs::exists(out / "manifest.json"));

  const std::string csv = read_file(out / "fig_frontier_trace.csv");
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  REQUIRE(lines == 10);  // header + 9 points
}

TEST_CASE("full emission produces all seven figure families reproducibly",
          "[experiments]") {
  const auto m = qpt_test::head_moments(qpt_test::fixture_moments(), 4);
  const auto results = fresh_dir("qpt_plots_full_results");

  {  // frontier + slice from real runs
    std::ofstream f(results / "frontier.json");
    f << qpt::frontier_to_json(qpt::trace_frontier(m, 5)).dump(2);
    qpt::EncodingParams params;
    params.k = 2;
    const double r_lo = m.expected_returns.minCoeff();
    const double r_hi = m.expected_returns.maxCoeff();
    const auto dots = qpt::slicing_range_experiment(m, r_lo, r_hi, 2, params,
                                                    light_schedule(), 3, true);
    std::ofstream s(results / "slice.json");
    s << qpt::slice_to_json(dots).dump(2);
  }
  {  // sweep from a real one-cell run
    qpt::SweepSpec spec;
    spec.k_set = {2};
    spec.theta_set = {4.0};
    spec.orders = {qpt::MOrder::linear};
    spec.runs_per_cell = 1;
    spec.theta_ref = 4.0;
    spec.alg1_samples = 200;
    spec.base.target_return = 0.03;
    spec.schedule = light_schedule();
    std::ofstream f(results / "sweep.json");
    f << qpt::sweep_to_json(qpt::run_sweep(m, spec, 9)).dump(2);
  }
  {  // two-stage batch from a real run
    qpt::EncodingParams params;
    params.k = 2;
    params.m = 20.0;
    params.target_return = 0.03;
    std::ofstream f(results / "two_stage.json");
    f << qpt::two_stage_batch_to_json(
             qpt::run_two_stage_batch(m, params, light_schedule(), 15, 2))
             .dump(2);
  }
  {  // minimal backtest report honoring the documented row schema
    nlohmann::json bt = {
        {"rows",
         {{{"quarter", "2015-03-31"},
           {"realized_return", 0.02},
           {"cumulative_return", 0.02},
           {"cumulative_compounded", 0.02}},
          {{"quarter", "2015-06-30"},
           {"realized_return", -0.01},
           {"cumulative_return", 0.01},
           {"cumulative_compounded", 0.0098}}}}};
    std::ofstream f(results / "backtest.json");
    f << bt.dump(2);
  }

  const auto out_a = fresh_dir("qpt_plots_full_out_a");
  const auto manifest = qpt::emit_plots(results, out_a);
  REQUIRE(manifest.at("families").size() == 7);
  std::set<std::string> names;
  for (const auto& fam : manifest.at("families"))
    names.insert(fam.at("name").get<std::string>());
  REQUIRE(names == std::set<std::string>{
                       "frontier_trace", "slice_dots", "sweep_box",
                       "backtest_curves", "two_stage_solutions",
                       "two_stage_error_box", "improvement_ratio"});
  for (const auto& fam : manifest.at("families"))
    REQUIRE(fs::exists(out_a / fam.at("file").get<std::string>()));
  REQUIRE(manifest.contains("generated_at"));

  // Re-emission is byte-identical except for the manifest timestamp.
  const auto out_b = fresh_dir("qpt_plots_full_out_b");
  qpt::emit_plots(results, out_b);
  for (const auto& fam : manifest.at("families")) {
    const auto file = fam.at("file").get<std::string>();
    const std::string body = read_file(out_a / file);
    REQUIRE(body == read_file(out_b / file));
    REQUIRE_THAT(body, !ContainsSubstring("generated_at"));
  }
}
