#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpt/qubo.hpp"
#include "qpt/rng.hpp"

namespace {

// Independent oracle: the full-matrix double sum over an explicitly stored
// symmetric matrix, written without reference to QuboModel internals.
double naive_energy(const std::vector<double>& a,
                    const std::vector<std::vector<double>>& b,
                    const qpt::BinaryAssignment& x) {
  const std::size_t n = a.size();
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) e += a[i] * x[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) e += b[i][j] * x[i] * x[j];
  return e;
}

struct RandomInstance {
  qpt::QuboModel model;
  std::vector<double> a;
  std::vector<std::vector<double>> b;
};

RandomInstance make_random_instance(std::size_t n, std::uint64_t seed) {
  RandomInstance inst{qpt::QuboModel(n), std::vector<double>(n, 0.0),
                      std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0))};
  auto gen = qpt::rng::make_engine(seed);
  for (std::size_t i = 0; i < n; ++i) {
    inst.a[i] = qpt::rng::uniform01(gen) * 10.0 - 5.0;
    inst.model.add_linear(i, inst.a[i]);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = qpt::rng::uniform01(gen) * 4.0 - 2.0;
      inst.b[i][j] = v;
      inst.b[j][i] = v;
      inst.model.add_quad(i, j, v);
    }
  return inst;
}

}  // namespace

TEST_CASE("evaluate matches direct expansion on a 2-variable model", "[qubo]") {
  qpt::QuboModel m(2);
  m.add_linear(0, 1.0);
  m.add_linear(1, -2.0);
  m.add_quad(0, 1, 1.5);
  CHECK(qpt::evaluate(m, {1, 1}) == 2.0);  // 1 - 2 + 2*1.5
  CHECK(qpt::evaluate(m, {1, 0}) == 1.0);
  CHECK(qpt::evaluate(m, {0, 1}) == -2.0);
}

TEST_CASE("evaluate of the all-zeros assignment is zero", "[qubo]") {
  auto inst = make_random_instance(7, 123);
  CHECK(qpt::evaluate(inst.model, qpt::BinaryAssignment(7, 0)) == 0.0);
}

TEST_CASE("evaluate agrees with an independent double-loop oracle", "[qubo]") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 10);
    auto inst = make_random_instance(n, 1000 + trial);
    auto gen = qpt::rng::make_engine(2000 + trial);
    for (int rep = 0; rep < 20; ++rep) {
      auto x = qpt::rng::random_assignment(n, gen);
      const double got = qpt::evaluate(inst.model, x);
      const double want = naive_energy(inst.a, inst.b, x);
      CHECK_THAT(got, Catch::Matchers::WithinAbs(want, 1e-12));
    }
  }
}

TEST_CASE("evaluate rejects mismatched assignment length", "[qubo]") {
  qpt::QuboModel m(3);
  CHECK_THROWS_AS(qpt::evaluate(m, {1, 0}), qpt::DimensionError);
}

TEST_CASE("diagonal quadratic contributions fold into linear terms", "[qubo]") {
  qpt::QuboModel m(2);
  m.add_quad(0, 0, 3.0);
  m.add_quad(1, 1, -1.0);
  CHECK(m.linear(0) == 3.0);
  CHECK(m.linear(1) == -1.0);
  CHECK(m.quad(0, 0) == 0.0);
  CHECK(m.quad(1, 1) == 0.0);
  CHECK(qpt::evaluate(m, {1, 1}) == 2.0);
  m.validate();  // symmetric, zero diagonal, finite
}

TEST_CASE("evaluate is linear in the model coefficients", "[qubo]") {
  auto lhs = make_random_instance(6, 42);
  auto rhs = make_random_instance(6, 43);
  const double alpha = 0.75, beta = -1.25;
  qpt::QuboModel combo(6);
  for (std::size_t i = 0; i < 6; ++i) {
    combo.add_linear(i, alpha * lhs.a[i] + beta * rhs.a[i]);
    for (std::size_t j = i + 1; j < 6; ++j)
      combo.add_quad(i, j, alpha * lhs.b[i][j] + beta * rhs.b[i][j]);
  }
  auto gen = qpt::rng::make_engine(99);
  for (int rep = 0; rep < 30; ++rep) {
    auto x = qpt::rng::random_assignment(6, gen);
    const double want =
        alpha * qpt::evaluate(lhs.model, x) + beta * qpt::evaluate(rhs.model, x);
    CHECK_THAT(qpt::evaluate(combo, x), Catch::Matchers::WithinAbs(want, 1e-12));
  }
}

TEST_CASE("flip_delta matches full re-evaluation", "[qubo]") {
  auto inst = make_random_instance(9, 77);
  auto gen = qpt::rng::make_engine(78);
  for (int rep = 0; rep < 25; ++rep) {
    auto x = qpt::rng::random_assignment(9, gen);
    const double base = qpt::evaluate(inst.model, x);
    for (std::size_t i = 0; i < 9; ++i) {
      auto flipped = x;
      flipped[i] ^= 1;
      const double want = qpt::evaluate(inst.model, flipped) - base;
      CHECK_THAT(qpt::flip_delta(inst.model, x, i),
                 Catch::Matchers::WithinAbs(want, 1e-12));
    }
  }
}

TEST_CASE("brute_force_solve finds the single-variable minimum", "[qubo]") {
  qpt::QuboModel m(1);
  m.add_linear(0, -1.0);
  auto r = qpt::brute_force_solve(m);
  CHECK(r.best == qpt::BinaryAssignment{1});
  CHECK(r.energy == -1.0);
}

TEST_CASE("brute_force_solve breaks ties lexicographically", "[qubo]") {
  qpt::QuboModel m(2);
  m.add_quad(0, 1, 5.0);
  // [0,0], [0,1], [1,0] all have energy 0; smallest bit string wins.
  auto r = qpt::brute_force_solve(m);
  CHECK(r.best == qpt::BinaryAssignment{0, 0});
  CHECK(r.energy == 0.0);
}

TEST_CASE("brute_force_solve beats random sampling", "[qubo]") {
  auto inst = make_random_instance(12, 555);
  auto r = qpt::brute_force_solve(inst.model);
  auto gen = qpt::rng::make_engine(556);
  for (int rep = 0; rep < 1000; ++rep) {
    auto x = qpt::rng::random_assignment(12, gen);
    CHECK(r.energy <= qpt::evaluate(inst.model, x));
  }
  // Sanity: the reported energy is the exact energy of the reported state.
  CHECK(r.energy == qpt::evaluate(inst.model, r.best));
}

TEST_CASE("brute_force_solve enforces the size limit", "[qubo]") {
  qpt::QuboModel m(25);
  CHECK_THROWS_AS(qpt::brute_force_solve(m), qpt::SizeLimitError);
}

TEST_CASE("validate_precision flags a linear term scaling to 2^80", "[qubo]") {
  qpt::QuboModel m(2);
  m.add_linear(0, std::ldexp(1.0, 44));  // * scale 2^36 -> 2^80 -> 81 bits
  m.add_linear(1, 1.0);
  auto report = qpt::validate_precision(m, qpt::PrecisionBudget{}, std::ldexp(1.0, 36));
  REQUIRE_FALSE(report.ok);
  REQUIRE(report.offending_terms.size() == 1);
  CHECK(report.offending_terms[0].i == 0);
  CHECK(report.offending_terms[0].is_linear);
  CHECK(report.offending_terms[0].bits_needed == 81);
  CHECK(report.offending_terms[0].bits_budget == 76);
}

TEST_CASE("validate_precision passes an all-zero model", "[qubo]") {
  qpt::QuboModel m(4);
  auto report = qpt::validate_precision(m, qpt::PrecisionBudget{}, 1e6);
  CHECK(report.ok);
  CHECK(report.offending_terms.empty());
}

TEST_CASE("validate_precision checks the submitted pair coefficient", "[qubo]") {
  // b_ij = 2^63 means the pair term 2*b_ij = 2^64 needs 65 bits at scale 1.
  qpt::QuboModel m(2);
  m.add_quad(0, 1, std::ldexp(1.0, 63));
  auto report = qpt::validate_precision(m, qpt::PrecisionBudget{}, 1.0);
  REQUIRE_FALSE(report.ok);
  REQUIRE(report.offending_terms.size() == 1);
  CHECK_FALSE(report.offending_terms[0].is_linear);
  CHECK(report.offending_terms[0].bits_needed == 65);
  CHECK(report.offending_terms[0].bits_budget == 64);

  // At half that magnitude the submitted coefficient fits exactly in 64 bits.
  qpt::QuboModel ok_model(2);
  ok_model.add_quad(0, 1, std::ldexp(1.0, 62));
  CHECK(qpt::validate_precision(ok_model, qpt::PrecisionBudget{}, 1.0).ok);
}

TEST_CASE("validate_precision ignores terms that round to zero", "[qubo]") {
  qpt::QuboModel m(1);
  m.add_linear(0, 1e-12);
  CHECK(qpt::validate_precision(m, qpt::PrecisionBudget{}, 1.0).ok);
}

TEST_CASE("JSON round-trip preserves the model exactly", "[qubo]") {
  auto inst = make_random_instance(8, 321);
  auto j = qpt::qubo_to_json(inst.model);
  CHECK(j.at("n") == 8);
  CHECK(j.at("linear").size() == 8);
  // Entries are upper-triangular and ordered by (i, j).
  std::size_t prev_i = 0, prev_j = 0;
  bool first = true;
  for (const auto& e : j.at("quadratic_upper")) {
    const auto i = e.at(0).get<std::size_t>();
    const auto k = e.at(1).get<std::size_t>();
    REQUIRE(i < k);
    if (!first) REQUIRE(std::make_pair(prev_i, prev_j) < std::make_pair(i, k));
    prev_i = i;
    prev_j = k;
    first = false;
  }
  auto back = qpt::qubo_from_json(j);
  REQUIRE(back.num_vars() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(back.linear(i) == inst.model.linear(i));
    for (std::size_t k = 0; k < 8; ++k) CHECK(back.quad(i, k) == inst.model.quad(i, k));
  }
}

TEST_CASE("JSON parsing rejects malformed quadratic entries", "[qubo]") {
  nlohmann::json j = {{"n", 2}, {"linear", {0.0, 0.0}}};
  j["quadratic_upper"] = nlohmann::json::array({{1, 0, 2.5}});  // i >= j
  CHECK_THROWS_AS(qpt::qubo_from_json(j), std::invalid_argument);
  j["quadratic_upper"] = nlohmann::json::array({{0, 5, 2.5}});  // out of range
  CHECK_THROWS_AS(qpt::qubo_from_json(j), std::invalid_argument);
}
