#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>

#include "qpt/annealer.hpp"
#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"

namespace {

qpt::QuboModel random_model(std::size_t n, std::uint64_t seed) {
  qpt::QuboModel m(n);
  auto gen = qpt::rng::make_engine(seed);
  for (std::size_t i = 0; i < n; ++i)
    m.add_linear(i, qpt::rng::uniform01(gen) * 2.0 - 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      m.add_quad(i, j, qpt::rng::uniform01(gen) * 2.0 - 1.0);
  return m;
}

}  // namespace

TEST_CASE("annealer finds the single-variable minimum", "[annealer]") {
  qpt::QuboModel m(1);
  m.add_linear(0, -1.0);
  qpt::AnnealSchedule s;
  s.sweeps = 50;
  s.restarts = 2;
  const auto r = qpt::solve(m, s);
  CHECK(r.best == qpt::BinaryAssignment{1});
  CHECK(r.energy == -1.0);
  CHECK(r.restarts_completed == 2);
}

TEST_CASE("annealer on the zero model returns energy zero", "[annealer]") {
  qpt::QuboModel m(6);
  qpt::AnnealSchedule s;
  s.sweeps = 30;
  const auto r = qpt::solve(m, s);
  CHECK(r.energy == 0.0);
  CHECK(qpt::evaluate(m, r.best) == 0.0);
}

TEST_CASE("default schedule matches brute force on >= 95 of 100 models", "[annealer]") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = random_model(12, 5000 + seed);
    const auto exact = qpt::brute_force_solve(m);
    auto s = qpt::default_schedule(m, seed);
    const auto got = qpt::solve(m, s);
    if (got.energy <= exact.energy + 1e-12) ++hits;
    CHECK(got.energy >= exact.energy - 1e-12);  // can never beat the oracle
  }
  CHECK(hits >= 95);
}

TEST_CASE("reported energy is an exact re-evaluation", "[annealer]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_model(30, 6000 + seed);
    qpt::AnnealSchedule s;
    s.sweeps = 200;
    s.restarts = 2;
    s.seed = seed;
    const auto r = qpt::solve(m, s);
    CHECK(r.energy == qpt::evaluate(m, r.best));  // 0 ulp
  }
}

TEST_CASE("identical schedules give identical results", "[annealer]") {
  const auto m = random_model(20, 7777);
  qpt::AnnealSchedule s;
  s.sweeps = 150;
  s.restarts = 3;
  s.seed = 42;
  s.record_trace = true;
  const auto a = qpt::solve(m, s);
  const auto b = qpt::solve(m, s);
  CHECK(a.best == b.best);
  CHECK(a.energy == b.energy);
  CHECK(a.energy_trace == b.energy_trace);
}

TEST_CASE("energy trace is non-increasing", "[annealer]") {
  const auto m = random_model(16, 8888);
  qpt::AnnealSchedule s;
  s.sweeps = 300;
  s.restarts = 2;
  s.seed = 3;
  s.record_trace = true;
  const auto r = qpt::solve(m, s);
  REQUIRE_FALSE(r.energy_trace.empty());
  for (std::size_t i = 1; i < r.energy_trace.size(); ++i)
    CHECK(r.energy_trace[i] <= r.energy_trace[i - 1]);
}

TEST_CASE("near-zero temperature behaves as strict descent", "[annealer]") {
  const auto m = random_model(14, 9999);
  qpt::AnnealSchedule s;
  s.sweeps = 100;
  s.restarts = 1;
  s.seed = 11;
  s.t_initial = 1e-12;
  s.t_final = 1e-13;
  const auto r = qpt::solve(m, s);
  // Restart 0's start state is reproducible from the documented derivation.
  auto gen = qpt::rng::make_engine(qpt::rng::derive_seed(s.seed, 0));
  const auto start = qpt::rng::random_assignment(14, gen);
  CHECK(r.energy <= qpt::evaluate(m, start));
}

TEST_CASE("patience stops stale chains without breaking the contract", "[annealer]") {
  const auto m = random_model(12, 1212);
  qpt::AnnealSchedule s;
  s.sweeps = 100000;  // would take a while without early stop
  s.restarts = 2;
  s.seed = 5;
  s.patience = 20;
  const auto r = qpt::solve(m, s);
  CHECK(r.energy == qpt::evaluate(m, r.best));
  const auto again = qpt::solve(m, s);
  CHECK(again.best == r.best);
  CHECK(again.energy == r.energy);
}

TEST_CASE("stagnant-restart stop ends the solve early", "[annealer]") {
  // Single-minimum model: every restart lands the same optimum, so the
  // second restart is already stagnant.
  qpt::QuboModel m(1);
  m.add_linear(0, -1.0);
  qpt::AnnealSchedule s;
  s.sweeps = 50;
  s.restarts = 8;
  s.max_stagnant_restarts = 1;
  const auto r = qpt::solve(m, s);
  CHECK(r.restarts_completed == 2);
  CHECK(r.energy == -1.0);

  // Disabled by default: all restarts run.
  s.max_stagnant_restarts = 0;
  CHECK(qpt::solve(m, s).restarts_completed == 8);

  // On a rugged model the stop is a budget cut, not a contract change:
  // exact-energy reporting and determinism still hold.
  const auto hard = random_model(18, 4545);
  qpt::AnnealSchedule hs;
  hs.sweeps = 120;
  hs.restarts = 10;
  hs.seed = 7;
  hs.max_stagnant_restarts = 2;
  const auto a = qpt::solve(hard, hs);
  const auto b = qpt::solve(hard, hs);
  CHECK(a.restarts_completed >= 3);  // restart 0 plus two stagnant ones at minimum
  CHECK(a.restarts_completed <= 10);
  CHECK(a.energy == qpt::evaluate(hard, a.best));
  CHECK(a.best == b.best);
  CHECK(a.restarts_completed == b.restarts_completed);
}

TEST_CASE("default_schedule derives its knobs from the model", "[annealer]") {
  qpt::QuboModel zero(4);
  const auto sz = qpt::default_schedule(zero);
  CHECK(sz.t_initial == 1e-9);  // clamp path
  CHECK(sz.t_final == 1e-3 * sz.t_initial);

  const auto m10 = random_model(10, 3131);
  const auto s10 = qpt::default_schedule(m10);
  CHECK(s10.sweeps == 2000);
  CHECK(s10.restarts == 8);
  CHECK(s10.t_final == 1e-3 * s10.t_initial);

  // Probe maximum dominates an exhaustive single-flip scan on random states.
  const auto big = random_model(80, 3232);
  const auto sb = qpt::default_schedule(big, 9);
  auto gen = qpt::rng::make_engine(99);
  double scan_max = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto x = qpt::rng::random_assignment(80, gen);
    for (std::size_t i = 0; i < 80; ++i)
      scan_max = std::max(scan_max, std::abs(qpt::flip_delta(big, x, i)));
  }
  CHECK(sb.t_initial >= scan_max * 0.5);  // same scale; probes may differ
}

TEST_CASE("schedules validate their invariants", "[annealer]") {
  qpt::AnnealSchedule s;
  s.sweeps = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.sweeps = 10;
  s.t_final = 2.0;  // >= t_initial
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.t_final = 1e-3;
  s.restarts = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
