#include "doctest.h"
#include "helpers.hpp"
#include "revdiff/losses.hpp"

using namespace revdiff;
using testing::max_abs;

namespace {

const ParamChoice kMarg{Parameterization::Marginalization, BridgeExtension::Canonical};
const ParamChoice kCanon{Parameterization::BridgePlugIn, BridgeExtension::Canonical};
const ParamChoice kBary{Parameterization::BridgePlugIn, BridgeExtension::Barycentric};

}  // namespace

TEST_CASE("phi") {
  CHECK(phi(1.0, 2.0) == doctest::Approx(0.306853).epsilon(1e-6));
  CHECK(phi(0.7, 0.7) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(phi(0.0, 0.3) == 0.3);
  CHECK_THROWS_AS(phi(1.0, 0.0), DomainError);
}

TEST_CASE("quadrature rules") {
  auto q = Quadrature::trapezoid(0.0, 1.0, 4);
  double w = 0.0;
  for (double v : q.weights) w += v;
  CHECK(w == doctest::Approx(1.0));
  CHECK(q.descriptor == "trapezoid[0,1]x4");
  auto lq = Quadrature::log_trapezoid(1e-3, 1.0, 512);
  double integral = 0.0;
  for (std::size_t i = 0; i < lq.nodes.size(); ++i) integral += lq.weights[i] * -std::log(lq.nodes[i]);
  double exact = 1.0 - 1e-3 * (1.0 - std::log(1e-3));  // integral of -log t on [1e-3, 1]
  CHECK(integral == doctest::Approx(exact).epsilon(1e-5));
  auto r = Quadrature::right_endpoint(TimeGrid::uniform(4));
  CHECK(r.nodes == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  auto d = default_quadrature(LossKind::Ctmc, NoiseSchedule{}, 64);
  CHECK(d.nodes.back() == doctest::Approx(0.999));
  CHECK(default_quadrature(LossKind::AudmContinuous, NoiseSchedule{}, 64).nodes.back() == 1.0);
}

TEST_CASE("discrete NELBO matches independent enumeration") {
  auto p = testing::small_p0();
  auto spec = testing::spec(2, 2);
  OraclePredictor d(p, spec, Representation::Denoiser);
  CHECK(nelbo_discrete(p, spec, d, kMarg, TimeGrid::uniform(2)) == doctest::Approx(1.2824616611087627).epsilon(1e-12));
  CHECK(nelbo_discrete(p, spec, d, kMarg, TimeGrid::uniform(4)) == doctest::Approx(1.2812410603200532).epsilon(1e-12));
}

TEST_CASE("plug-in of the LOO rows equals marginalization of the denoiser") {
  auto spec = testing::spec(3, 2);
  auto p0 = DataTable::dirichlet(3, 2, 2);
  OraclePredictor d(p0, spec, Representation::Denoiser), loo(p0, spec, Representation::LeaveOneOut);
  auto grid = TimeGrid::uniform(4);
  CHECK(nelbo_discrete(p0, spec, loo, kCanon, grid) ==
        doctest::Approx(nelbo_discrete(p0, spec, d, kMarg, grid)).epsilon(1e-12));
  CHECK(nelbo_discrete(p0, spec, d, kBary, grid) ==
        doctest::Approx(nelbo_discrete(p0, spec, d, kMarg, grid)).epsilon(1e-12));
}

TEST_CASE("joint oracle attains the entropy") {
  auto spec = testing::spec(2, 2);
  auto p0 = DataTable::dirichlet(2, 2, 9);
  OraclePredictor j(p0, spec, Representation::Denoiser, true), f(p0, spec, Representation::Denoiser);
  for (int n : {1, 2, 5}) {
    auto grid = TimeGrid::uniform(n);
    CHECK(nelbo_discrete(p0, spec, j, kMarg, grid) == doctest::Approx(p0.entropy()).epsilon(1e-12));
    CHECK(nelbo_discrete(p0, spec, f, kMarg, grid) >= p0.entropy() - 1e-12);
  }
}

TEST_CASE("oracle denoiser beats a random table") {
  auto spec = testing::spec(2, 2);
  auto p0 = DataTable::dirichlet(2, 2, 1);
  auto grid = TimeGrid::uniform(4);
  OraclePredictor d(p0, spec, Representation::Denoiser);
  auto t = TablePredictor::random(spec, Representation::Denoiser, TablePredictor::grid_bins(grid), 3);
  CHECK(nelbo_discrete(p0, spec, d, kMarg, grid) < nelbo_discrete(p0, spec, t, kMarg, grid));
}

TEST_CASE("MDM parameterizations give identical kernels") {
  auto spec = testing::spec(3, 1, Family::MDM);
  Row mu{0.2, 0.3, 0.5};
  for (int x = 0; x < 4; ++x) {
    StepRule a(spec, kMarg, Representation::Denoiser, 0.3, 0.7), b(spec, kCanon, Representation::Denoiser, 0.3, 0.7);
    CHECK(max_abs(a.row(mu, x), b.row(mu, x)) < 1e-14);
  }
}

TEST_CASE("step rule vjp matches finite differences") {
  for (auto param : {kMarg, kCanon, kBary}) {
    auto spec = testing::spec(3, 1);
    StepRule r(spec, param, Representation::Denoiser, 0.2, 0.6);
    Row mu{0.2, 0.5, 0.3}, g{0.3, -1.2, 0.8};
    for (int x = 0; x < 3; ++x) {
      auto an = r.vjp(mu, x, g);
      for (int i = 0; i < 3; ++i) {
        Row a = mu, b = mu;
        a[i] += 1e-6;
        b[i] -= 1e-6;
        auto fa = r.row(a, x), fb = r.row(b, x);
        double fd = 0.0;
        for (int j = 0; j < 3; ++j) fd += g[j] * (fa[j] - fb[j]) / 2e-6;
        CHECK(an[i] == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("cross entropy") {
  auto spec = testing::spec(3, 2);
  auto p0 = DataTable::dirichlet(3, 2, 1);
  auto grid = TimeGrid::uniform(4);
  auto quad = Quadrature::right_endpoint(grid);
  TablePredictor u(spec, Representation::Denoiser, TablePredictor::grid_bins(grid));
  CHECK(cross_entropy_denoising(p0, spec, u, quad) == doctest::Approx(2 * std::log(3.0)).epsilon(1e-12));

  OraclePredictor d(p0, spec, Representation::Denoiser);
  double expected = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
    double t = quad.nodes[i], acc = 0.0;
    auto pt = marginal(p0, spec, t);
    for (State x = 0; x < 9; ++x) {
      auto g = denoiser_exact(p0, spec, x, t);
      for (int l = 0; l < 2; ++l) acc += pt.probs[x] * entropy(g.span(l));
    }
    expected += quad.weights[i] * acc;
    wsum += quad.weights[i];
  }
  CHECK(cross_entropy_denoising(p0, spec, d, quad) == doctest::Approx(expected / wsum).epsilon(1e-12));
}

TEST_CASE("AUDM NELBO") {
  auto spec = testing::spec(3, 2, Family::AUDM);
  auto p0 = DataTable::dirichlet(3, 2, 100);
  OraclePredictor o(p0, spec, Representation::Denoiser);
  double a = audm_nelbo_continuous(p0, spec, o, default_quadrature(LossKind::AudmContinuous, spec.schedule, 512));
  double b = audm_nelbo_continuous(p0, spec, o, default_quadrature(LossKind::AudmContinuous, spec.schedule, 1024));
  CHECK(std::abs(a - b) <= 1e-4);
  CHECK(a >= p0.entropy() - 1e-3);
  CHECK_THROWS_AS(audm_nelbo_continuous(p0, spec, o, Quadrature::trapezoid(0.0, 1.0, 8)), DomainError);

  auto mdm = testing::spec(3, 2, Family::MDM);
  OraclePredictor om(p0, mdm, Representation::Denoiser);
  auto q = default_quadrature(LossKind::AudmContinuous, mdm.schedule, 128);
  CHECK(std::abs(audm_nelbo_continuous(p0, mdm, om, q) - mdm_nelbo_continuous(p0, mdm, om, q)) <= 1e-10);
}

TEST_CASE("max-coupling integrand matches direct enumeration") {
  auto spec = testing::spec(3, 2, Family::MaxCoupling);
  auto udm = testing::spec(3, 2);
  auto p0 = DataTable::dirichlet(3, 2, 4);
  OraclePredictor o(p0, spec, Representation::Denoiser);
  auto obj = make_continuous(p0, spec, LossKind::MaxCoupling, Quadrature::trapezoid(0.1, 0.9, 4));
  Codec c(3, 2);
  for (double t : {0.2, 0.5, 0.8}) {
    double a = spec.schedule.alpha(t), pref = -spec.schedule.alpha_prime(t) / (1.0 - a), direct = 0.0;
    for (State x0 = 0; x0 < 9; ++x0)
      for (State xt = 0; xt < 9; ++xt) {
        double q = p0.probs[x0];
        for (int l = 0; l < 2; ++l) q *= (c.digit(x0, l) == c.digit(xt, l) ? a : 0.0) + (1 - a) / 3;
        auto d = denoiser_exact(p0, udm, xt, t);
        for (int l = 0; l < 2; ++l) {
          int x = c.digit(xt, l), z = c.digit(x0, l);
          double v = 1.0 - d.at(l, x);
          if (x != z) v -= 1.0 + std::log(d.at(l, z));
          direct += q * v;
        }
      }
    CHECK(obj->integrand(o, t) == doctest::Approx(pref * direct).epsilon(1e-10));
    TablePredictor u(spec, Representation::Denoiser, {1.0});
    CHECK(obj->integrand(u, t) > obj->integrand(o, t));
  }
}

TEST_CASE("CTMC ELBO with the oracle score leaves only the irreducible term") {
  auto spec = testing::spec(3, 2);
  auto p0 = DataTable::dirichlet(3, 2, 5);
  OraclePredictor s(p0, spec, Representation::Score);
  auto obj = make_continuous(p0, spec, LossKind::Ctmc, Quadrature::trapezoid(0.1, 0.9, 4));
  Codec c(3, 2);
  for (double t : {0.3, 0.7}) {
    double a = spec.schedule.alpha(t);
    auto lik = [&](int k, int y) { return (k == y ? a : 0.0) + (1 - a) / 3; };
    auto pt = marginal(p0, spec, t);
    double e = 0.0;
    for (State x = 0; x < 9; ++x) {
      auto d = denoiser_exact(p0, spec, x, t);
      for (int l = 0; l < 2; ++l)
        for (int y = 0; y < 3; ++y) {
          int cur = c.digit(x, l);
          if (y == cur) continue;
          double abar = 0.0, alog = 0.0;
          for (int k = 0; k < 3; ++k) {
            double r = lik(k, y) / lik(k, cur);
            abar += d.at(l, k) * r;
            alog += d.at(l, k) * r * std::log(r);
          }
          e += pt.probs[x] * (alog - abar * std::log(abar));
        }
    }
    CHECK(obj->integrand(s, t) == doctest::Approx(spec.schedule.beta(t) / 3 * e).epsilon(1e-10));
  }
}

TEST_CASE("linear bridge ELBO equals the CTMC ELBO of the converted score") {
  auto spec = testing::spec(3, 2);
  auto p0 = DataTable::dirichlet(3, 2, 6);
  auto bins = std::vector<double>{0.25, 0.5, 0.75, 1.0};
  auto d = std::make_shared<TablePredictor>(TablePredictor::random(spec, Representation::Denoiser, bins, 11));
  ConvertedPredictor s(d, Representation::Score);
  auto q = default_quadrature(LossKind::Ctmc, spec.schedule, 64);
  CHECK(linear_bridge_ct_elbo(p0, spec, *d, q) == doctest::Approx(ctmc_elbo(p0, spec, s, q)).epsilon(1e-10));
}

TEST_CASE("loss reports") {
  auto spec = testing::spec(2, 2);
  auto p0 = DataTable::dirichlet(2, 2, 3);
  OraclePredictor d(p0, spec, Representation::Denoiser);
  LossSpec ls;
  auto r = evaluate_report(p0, spec, ls, d);
  CHECK(r.loss_name == "nelbo_discrete");
  CHECK(r.predictor_id == "oracle/denoiser/UDM");
  CHECK(r.prior_kl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(parse_loss("ctmc_elbo") == LossKind::Ctmc);
  CHECK_THROWS_AS(parse_loss("nope"), ConfigError);
  CHECK(param_name(parse_param("plugin_barycentric")) == "plugin_barycentric");
}
