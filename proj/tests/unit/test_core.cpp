#include <numeric>

#include "doctest.h"
#include "helpers.hpp"

using namespace revdiff;
using testing::max_abs;

TEST_CASE("linear and geometric schedules") {
  NoiseSchedule lin;
  CHECK(lin.alpha(0.3) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(lin.alpha(1.0) == 0.0);
  CHECK(lin.alpha_ratio(0.5, 0.75) == doctest::Approx(0.5));
  CHECK(lin.beta(0.5) == doctest::Approx(2.0));
  NoiseSchedule geo{ScheduleKind::Geometric};
  CHECK(geo.alpha(0.0) == 1.0);
  CHECK(geo.alpha(0.5) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(geo.beta(0.2) == doctest::Approx(-std::log(1e-6)));
  CHECK_THROWS_AS(lin.alpha(1.5), DomainError);
}

TEST_CASE("schedule derivative matches central difference") {
  for (auto k : {ScheduleKind::Linear, ScheduleKind::Geometric}) {
    NoiseSchedule s{k};
    for (double t : {0.1, 0.4, 0.8}) {
      double h = 1e-6;
      double fd = (s.alpha(t + h) - s.alpha(t - h)) / (2 * h);
      CHECK(s.alpha_prime(t) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("mixed radix encoding") {
  std::vector<int> tok{2, 1};
  CHECK(encode_state(tok, 3) == 5);
  CHECK(decode_state(5, 3, 2) == tok);
  Codec c(4, 3);
  for (State s = 0; s < c.size(); ++s) CHECK(c.encode(c.decode(s)) == s);
  CHECK(c.with_digit(0, 2, 3) == 48);
  CHECK(clean_index(encode_state(std::vector<int>{1, 2}, 4), 3, 2, 4) == 7);
  CHECK_THROWS_AS(clean_index(3, 3, 2, 4), DomainError);
}

TEST_CASE("enumeration cap") {
  CHECK_THROWS_AS(testing::spec(64, 4).validate(), CapacityError);
  CHECK_NOTHROW(testing::spec(16, 4).validate());
  CHECK(testing::spec(3, 2, Family::MDM).num_states() == 16);
  CHECK_THROWS_AS(checked_pow(10, 10, kStateCap), CapacityError);
}

TEST_CASE("data tables") {
  auto p = DataTable::dirichlet(3, 2, 1);
  CHECK(std::accumulate(p.probs.begin(), p.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(DataTable::dirichlet(3, 2, 1).probs == p.probs);
  CHECK(DataTable::dirichlet(3, 2, 2).probs != p.probs);
  CHECK(DataTable::uniform(2, 3).entropy() == doctest::Approx(3 * std::log(2.0)));
  CHECK(DataTable::point_mass(3, 2, 4).entropy() == 0.0);
  CHECK_THROWS_AS(DataTable(2, 1, {0.7, 0.2}), DomainError);
  CHECK_THROWS_AS(DataTable(2, 1, {1.1, -0.1}), DomainError);

  auto emb = testing::small_p0().embed(3);
  CHECK(emb.size() == 9);
  CHECK(emb[encode_state(std::vector<int>{1, 1}, 3)] == 0.1);
  auto back = DataTable::from_any(2, 2, emb);
  CHECK(back.probs == testing::small_p0().probs);
}

TEST_CASE("time grids") {
  auto g = TimeGrid::uniform(4);
  CHECK(g.n() == 4);
  CHECK(g.t(4) == 1.0);
  CHECK(g.index_of(0.5) == 2);
  CHECK_THROWS_AS(g.index_of(0.3), GridError);
  auto f = TimeGrid::uniform(4, Terminal::Floor, 1e-3);
  CHECK(f.t(4) == doctest::Approx(0.999));
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), GridError);
  CHECK_THROWS_AS(TimeGrid::uniform(0), GridError);
}

TEST_CASE("numerics") {
  std::vector<double> v{1000.0, 1000.0};
  CHECK(logsumexp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  auto s = softmax(std::vector<double>{0.0, -INFINITY, 0.0});
  CHECK(max_abs(s, std::vector<double>{0.5, 0.0, 0.5}) == 0.0);
  CHECK(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}) == INFINITY);
  CHECK(kl_divergence(std::vector<double>{0.9, 0.1}, std::vector<double>{0.9, 0.1}) == 0.0);
  CHECK(entropy(std::vector<double>{1.0, 0.0}) == 0.0);
  CHECK_THROWS_AS(check_simplex(std::vector<double>{0.5, 0.6}), DomainError);
}

TEST_CASE("parallel_for covers the range once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) ++hits[i];
  });
  for (int h : hits) CHECK(h == 1);
}
