#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "revdiff/predict.hpp"

using namespace revdiff;
using testing::max_abs;

TEST_CASE("denoiser to LOO example") {
  // alpha_t = 1/3 at linear t = 2/3.
  auto spec = testing::spec(2, 1);
  double t = 2.0 / 3.0;
  auto d = RowConversion(spec, Representation::LeaveOneOut, Representation::Denoiser, 0, t).apply(Row{0.5, 0.5});
  CHECK(max_abs(d, Row{2.0 / 3.0, 1.0 / 3.0}) < 1e-12);
  auto back = RowConversion(spec, Representation::Denoiser, Representation::LeaveOneOut, 0, t).apply(d);
  CHECK(max_abs(back, Row{0.5, 0.5}) < 1e-12);
  auto shifted = softmax(loo_logit_shift(Row{0.0, 0.0}, 0, t, 2, spec.schedule));
  CHECK(max_abs(shifted, d) < 1e-12);
  CHECK(loo_logit_shift(Row{0.0, 0.0}, 0, t, 2, spec.schedule)[0] == doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("oracle conversions agree with oracles") {
  std::mt19937_64 rng(5);
  for (auto f : {Family::UDM, Family::MDM}) {
    auto spec = testing::spec(3, 2, f);
    auto p0 = DataTable::dirichlet(3, 2, 8);
    for (int rep = 0; rep < 40; ++rep) {
      State x = rng() % spec.num_states();
      double t = 0.05 + 0.9 * std::uniform_real_distribution<double>()(rng);
      auto d = denoiser_exact(p0, spec, x, t), loo = loo_exact(p0, spec, x, t), s = score_exact(p0, spec, x, t);
      CHECK(max_abs(convert(loo, Representation::LeaveOneOut, Representation::Denoiser, x, t, spec).v, d.v) < 1e-12);
      CHECK(max_abs(convert(loo, Representation::LeaveOneOut, Representation::Score, x, t, spec).v, s.v) < 1e-12);
      CHECK(max_abs(convert(s, Representation::Score, Representation::LeaveOneOut, x, t, spec).v, loo.v) < 1e-12);
      if (f == Family::UDM) {
        CHECK(max_abs(convert(d, Representation::Denoiser, Representation::LeaveOneOut, x, t, spec).v, loo.v) < 1e-12);
        CHECK(max_abs(convert(d, Representation::Denoiser, Representation::Score, x, t, spec).v, s.v) < 1e-12);
      }
    }
  }
}

TEST_CASE("MDM visible positions cannot be converted from the denoiser") {
  auto spec = testing::spec(2, 1, Family::MDM);
  CHECK_THROWS_AS(RowConversion(spec, Representation::Denoiser, Representation::LeaveOneOut, 0, 0.5).apply(Row{1, 0}),
                  UnsupportedConversionError);
  CHECK_NOTHROW(RowConversion(spec, Representation::Denoiser, Representation::LeaveOneOut, 2, 0.5).apply(Row{0.4, 0.6}));
}

TEST_CASE("conversion at alpha = 1 is a domain error") {
  auto spec = testing::spec(2, 1);
  CHECK_THROWS_AS(RowConversion(spec, Representation::Denoiser, Representation::LeaveOneOut, 0, 0.0).apply(Row{1, 0}),
                  DomainError);
  CHECK_THROWS_AS(loo_logit_shift(Row{0, 0}, 0, 0.0, 2, spec.schedule), DomainError);
}

TEST_CASE("conversion vjp matches finite differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N;
  for (auto [from, to] : std::vector<std::pair<Representation, Representation>>{
           {Representation::LeaveOneOut, Representation::Denoiser},
           {Representation::Denoiser, Representation::LeaveOneOut},
           {Representation::LeaveOneOut, Representation::Score},
           {Representation::Denoiser, Representation::Score},
           {Representation::Score, Representation::LeaveOneOut}}) {
    auto spec = testing::spec(3, 1);
    RowConversion rc(spec, from, to, 1, 0.4);
    Row in = from == Representation::Score ? Row{0.7, 1.0, 1.3} : Row{0.2, 0.5, 0.3};
    Row g(3);
    for (auto& v : g) v = N(rng);
    auto an = rc.vjp(in, g);
    for (int i = 0; i < 3; ++i) {
      if (from == Representation::Score && i == 1) continue;
      Row a = in, b = in;
      a[i] += 1e-6;
      b[i] -= 1e-6;
      auto fa = rc.apply(a), fb = rc.apply(b);
      double fd = 0.0;
      for (int j = 0; j < 3; ++j) fd += g[j] * (fa[j] - fb[j]) / 2e-6;
      CHECK(an[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("table predictor") {
  auto spec = testing::spec(2, 2);
  auto grid = TimeGrid::uniform(4);
  auto bins = TablePredictor::grid_bins(grid);
  CHECK(bins == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  TablePredictor t(spec, Representation::Denoiser, bins);
  CHECK(t.num_params() == 4 * 4 * 2 * 2);
  CHECK(max_abs(t.predict(3, 0.6).span(1), Row{0.5, 0.5}) == 0.0);
  CHECK(t.bin_of(0.25) == 0);
  CHECK(t.bin_of(0.26) == 1);
  CHECK(t.bin_of(1.0) == 3);
  CHECK_THROWS_AS(t.bin_of(1.01), DomainError);
  auto r = TablePredictor::random(spec, Representation::LeaveOneOut, bins, 4);
  CHECK(r.logits() == TablePredictor::random(spec, Representation::LeaveOneOut, bins, 4).logits());
  CHECK_THROWS_AS(TablePredictor(spec, Representation::Denoiser, {0.5, 0.5}), GridError);

  TablePredictor sc(spec, Representation::Score, bins);
  auto sg = sc.predict(0, 0.5);
  auto row = sg.span(0);
  CHECK(row[0] == 1.0);
  CHECK(row[1] == 1.0);

  auto audm = testing::spec(2, 2, Family::AUDM);
  TablePredictor ta(audm, Representation::Denoiser, bins);
  CHECK(ta.num_states() == 16);
  // x = (1, 0), u = (0, 0): position 0 has left the absorbing state and is a Dirac.
  auto g = ta.predict(1, 0.5, State{0});
  CHECK(max_abs(g.span(0), Row{0.0, 1.0}) == 0.0);
  CHECK(ta.fixed_row(1, State{0}, 0));
  CHECK_FALSE(ta.fixed_row(1, State{0}, 1));
}

TEST_CASE("oracle predictors") {
  auto p = testing::small_p0();
  OraclePredictor d(p, testing::spec(2, 2), Representation::Denoiser, true);
  CHECK(d.has_joint());
  CHECK(d.id() == "oracle/denoiser/UDM/joint");
  CHECK(max_abs(d.predict(0, 0.5).span(0), Row{0.8076923076923078, 0.19230769230769232}) < 1e-14);
  OraclePredictor a(p, testing::spec(2, 2, Family::AUDM), Representation::Denoiser);
  CHECK_THROWS_AS(a.predict(0, 0.5), ArgumentError);
  CHECK_THROWS_AS(OraclePredictor(p, testing::spec(2, 2, Family::AUDM), Representation::Score), UnsupportedConversionError);
  ConvertedPredictor c(std::make_shared<OraclePredictor>(p, testing::spec(2, 2), Representation::Denoiser),
                       Representation::LeaveOneOut);
  CHECK(max_abs(c.predict(0, 0.5).span(0), Row{0.5833333333333334, 0.41666666666666663}) < 1e-14);
}

TEST_CASE("leave-one-out sensitivity") {
  auto spec = testing::spec(3, 2);
  auto p0 = DataTable::dirichlet(3, 2, 4);
  auto base = std::make_shared<OraclePredictor>(p0, spec, Representation::Denoiser);
  ConvertedPredictor conv(base, Representation::LeaveOneOut);
  OraclePredictor loo(p0, spec, Representation::LeaveOneOut);
  auto tab = TablePredictor::random(spec, Representation::LeaveOneOut, {0.25, 0.5, 0.75, 1.0}, 7);
  double mc = 0.0, ml = 0.0, mt = 0.0;
  for (State x = 0; x < 9; ++x)
    for (int l = 0; l < 2; ++l) {
      mc = std::max(mc, loo_sensitivity(conv, x, l, 0.5));
      ml = std::max(ml, loo_sensitivity(loo, x, l, 0.5));
      mt = std::max(mt, loo_sensitivity(tab, x, l, 0.5));
    }
  CHECK(mc <= 1e-12);
  CHECK(ml <= 1e-12);
  CHECK(mt > 1e-3);
  CHECK_THROWS_AS(loo_sensitivity(*base, 0, 0, 0.5), ArgumentError);
}
