#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "otproto/sinkhorn.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace otproto;
using testing_support::error_code;

namespace {

CostMatrix random_costs(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<float> v(r * c);
  for (auto& x : v) x = static_cast<float>(u(rng));
  return CostMatrix::from_values(r, c, std::move(v));
}

}  // namespace

TEST_CASE("2x2 plan has the closed-form off-diagonal mass") {
  auto m = CostMatrix::from_values(2, 2, {0, 1, 1, 0});
  for (double eps : {1.0, 0.1, 0.05}) {
    auto plan = solve(m, {eps, 1000, 1e-9});
    const double off = 0.5 / (1.0 + std::exp(1.0 / eps));  // 0.5 * sigmoid(-1/eps)
    CHECK(plan.at(0, 1) == doctest::Approx(off).epsilon(1e-6));
    CHECK(plan.at(0, 0) == doctest::Approx(0.5 - off).epsilon(1e-6));
  }
  // At eps = 0.01 the off-diagonal entry is float-subnormal; only its magnitude is meaningful.
  auto plan = solve(m, {0.01, 1000, 1e-9});
  const double off = 0.5 / (1.0 + std::exp(100.0));
  CHECK(std::abs(plan.at(0, 1) - off) <= 0.1 * off);
}

TEST_CASE("marginals and cost against the permutation oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t r = 1 + trial % 5;
    auto m = random_costs(r, r, rng);
    const double eps = 0.01;
    auto plan = solve(m, {eps, 1000000, 1e-6});
    CHECK(plan.converged());
    auto res = marginal_residuals(plan);
    CHECK(res.row <= 1e-6);
    CHECK(res.col <= 1e-6);
    std::vector<double> md(m.values().begin(), m.values().end());
    const double exact = oracle::exact_ot_square(md, r);
    const double got = plan.transport_cost(m);
    CHECK(got >= exact - 1e-6);
    CHECK(got <= exact + eps * std::log(double(r * r)) + 1e-3);
  }
}

TEST_CASE("rectangular marginals are uniform") {
  std::mt19937_64 rng(2);
  auto m = random_costs(7, 3, rng);
  auto plan = solve(m, {0.1, 2000, 1e-9});
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += plan.at(i, j);
    CHECK(s == doctest::Approx(1.0 / 7).epsilon(1e-6));
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 7; ++i) s += plan.at(i, j);
    CHECK(s == doctest::Approx(1.0 / 3).epsilon(1e-6));
  }
}

TEST_CASE("log-domain and direct iterations agree") {
  std::mt19937_64 rng(9);
  for (double eps : {0.1, 1.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto m = random_costs(3 + trial % 4, 2 + trial % 5, rng);
      auto a = solve(m, {eps, 500, 1e-12, true});
      auto b = solve(m, {eps, 500, 1e-12, false});
      for (std::size_t x = 0; x < a.values().size(); ++x) {
        CHECK(std::abs(a.values()[x] - b.values()[x]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("direct iterations report underflow instead of returning garbage") {
  // exp(-8 / 0.01) is below the smallest double, so whole rows of the kernel vanish.
  auto m = CostMatrix::from_values(2, 2, {8, 9, 9, 8});
  CHECK(error_code([&] { solve(m, {0.01, 100, 1e-6, false}); }) == ErrorCode::NumericOverflow);
  // The log domain handles the same problem.
  auto plan = solve(m, {0.01, 100, 1e-6, true});
  CHECK(plan.at(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("iteration cap without convergence") {
  std::mt19937_64 rng(4);
  auto m = random_costs(6, 6, rng);
  auto plan = solve(m, {0.001, 1, 1e-12});
  CHECK_FALSE(plan.converged());
  CHECK(plan.iterations() == 1);
  // Columns are rescaled last, so they hold exactly even when rows do not.
  CHECK(marginal_residuals(plan).col <= 1e-6);
}

TEST_CASE("parameter and input validation") {
  auto m = CostMatrix::from_values(1, 1, {0});
  CHECK(error_code([&] { solve(m, {0.0}); }) == ErrorCode::InvalidConfig);
  CHECK(error_code([&] { solve(m, {0.1, 0}); }) == ErrorCode::InvalidConfig);
  CHECK(error_code([] { CostMatrix::from_values(1, 2, {0}); }) == ErrorCode::DimMismatch);
  CHECK(error_code([] { CostMatrix::from_values(1, 1, {NAN}); }) == ErrorCode::NonFinite);
}
