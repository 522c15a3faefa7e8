#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "revdiff/eval.hpp"

using namespace revdiff;

namespace {

EmpiricalDistribution draw(const std::vector<double>& law, std::size_t N, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::discrete_distribution<State> d(law.begin(), law.end());
  std::vector<State> xs(N);
  for (auto& x : xs) x = d(g);
  return EmpiricalDistribution::from_samples(xs, law.size());
}

}  // namespace

TEST_CASE("total variation") {
  std::vector<double> a{0.5, 0.5, 0.0}, b{0.25, 0.25, 0.5};
  CHECK(tv_distance(a, b) == doctest::Approx(0.5));
  CHECK(tv_distance(a, a) == 0.0);
  CHECK(tv_distance(a, b) == tv_distance(b, a));
  CHECK_THROWS_AS(tv_distance(a, std::vector<double>{1.0}), ArgumentError);
  auto emp = EmpiricalDistribution::from_samples({0, 0, 1, 2}, 3);
  CHECK(emp.N == 4);
  CHECK(emp.probs() == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(tv_distance(emp, ExactDistribution{"", b}) == doctest::Approx(0.25));
  CHECK_THROWS(EmpiricalDistribution::from_samples({3}, 3));
}

TEST_CASE("total variation is a metric on fuzzed triples") {
  std::mt19937_64 g(3);
  std::gamma_distribution<double> gam(1.0);
  auto rnd = [&] {
    std::vector<double> v(6);
    double z = 0.0;
    for (auto& x : v) z += x = gam(g);
    for (auto& x : v) x /= z;
    return v;
  };
  for (int i = 0; i < 200; ++i) {
    auto a = rnd(), b = rnd(), c = rnd();
    CHECK(std::abs(tv_distance(a, b) - tv_distance(b, a)) <= 1e-12);
    CHECK(tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12);
  }
}

TEST_CASE("chi-square on exact counts") {
  ExactDistribution law{"", {0.5, 0.25, 0.25}};
  auto emp = EmpiricalDistribution::from_samples({0, 0, 1, 2, 0, 0, 1, 2, 0, 0, 1, 2, 0, 0, 1, 2, 0, 0, 1, 2,
                                                  0, 0, 1, 2, 0, 0, 1, 2, 0, 0, 1, 2},
                                                 3);
  auto r = chi_square_gof(emp, law);
  CHECK(r.statistic == 0.0);
  CHECK(r.dof == 2);
  CHECK(chi_square_quantile(2, 0.95) == doctest::Approx(5.991464547107979));
}

TEST_CASE("chi-square pools sparse bins") {
  ExactDistribution law{"", {0.9, 0.09, 0.005, 0.005}};
  auto r = chi_square_gof(draw(law.probs, 200, 1), law);
  CHECK(r.bins == 2);
  CHECK(r.dof == 1);
}

TEST_CASE("chi-square calibration and power") {
  auto p0 = DataTable::dirichlet(3, 2, 17);
  ExactDistribution law{"", p0.probs};
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto r = chi_square_gof(draw(p0.probs, 100000, seed), law);
    inside += r.statistic <= chi_square_quantile(r.dof, 0.999);
  }
  CHECK(inside >= 99);

  auto shifted = p0.probs;
  int hi = 0, lo = 0;
  for (std::size_t i = 1; i < shifted.size(); ++i) {
    if (shifted[i] > shifted[hi]) hi = int(i);
    if (shifted[i] < shifted[lo]) lo = int(i);
  }
  double d = std::min(0.05, shifted[hi]);
  shifted[hi] -= d;
  shifted[lo] += d;
  REQUIRE(tv_distance(shifted, p0.probs) == doctest::Approx(0.05));
  auto r = chi_square_gof(draw(shifted, 100000, 3), law);
  CHECK(r.statistic > chi_square_quantile(r.dof, 0.999));
}

TEST_CASE("bootstrap standard error scales with sample size") {
  std::vector<double> law{0.4, 0.3, 0.2, 0.1};
  double a = tv_standard_error(law, 10000, 200, 1), b = tv_standard_error(law, 40000, 200, 1);
  CHECK(a / b == doctest::Approx(2.0).epsilon(0.15));
  CHECK(tv_standard_error(law, 10000, 200, 1) == a);
}

TEST_CASE("sample summaries") {
  CHECK(mean_position_entropy({0, 3}, 2, 2) == doctest::Approx(std::log(2.0)));
  CHECK(mean_position_entropy({1, 1, 1}, 2, 2) == 0.0);
  DataTable p0(2, 2, {0.5, 0.5, 0.0, 0.0});
  CHECK(mean_nll({0, 1}, p0, 2) == doctest::Approx(std::log(2.0)));
  CHECK(std::isinf(mean_nll({2}, p0, 2)));
  // radix 3: token 2 is the mask
  CHECK(to_clean({0, 1 + 3 * 1, 2}, 2, 2, 3) == std::vector<State>{0, 3, 4});
}

TEST_CASE("frontier sweep") {
  auto p0 = DataTable::dirichlet(2, 2, 3);
  SamplerSpec base;
  base.predictor = std::make_shared<OraclePredictor>(p0, testing::spec(2, 2), Representation::Denoiser);
  CHECK(frontier_sweep(base, {}, {4}, 100, 1, p0).empty());
  std::vector<Modifier> mods{Modifier::temperature(1.0), Modifier::temperature(0.5), Modifier::temperature(0.1)};
  auto rows = frontier_sweep(base, mods, {2, 4}, 20000, 1, p0);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].modifier_kind == "temperature");
  CHECK(rows[0].nfe == 2);
  CHECK(rows[1].nfe == 4);
  CHECK(rows[0].n_samples == 20000);
  for (int nfe_i = 0; nfe_i < 2; ++nfe_i) {
    CHECK(rows[2 + nfe_i].entropy < rows[nfe_i].entropy);
    CHECK(rows[4 + nfe_i].entropy < rows[2 + nfe_i].entropy);
  }
  auto again = frontier_sweep(base, mods, {2, 4}, 20000, 1, p0);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].tv == again[i].tv);
}
