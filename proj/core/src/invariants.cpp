#include "revdiff/invariants.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "revdiff/eval.hpp"
#include "revdiff/losses.hpp"
#include "revdiff/oracle.hpp"
#include "revdiff/predict.hpp"
#include "revdiff/samplers.hpp"
#include "revdiff/train.hpp"

namespace revdiff {
namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

InvariantResult within(double err, double tol) { return {err <= tol, "err " + sci(err) + " (tol " + sci(tol) + ")"}; }

double max_abs(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ProcessSpec make(int K, int L, Family f) {
  ProcessSpec s;
  s.K = K;
  s.L = L;
  s.family = f;
  return s;
}

Row onehot(int K, int k) {
  Row r(K, 0.0);
  r[k] = 1.0;
  return r;
}

std::vector<Invariant> build() {
  std::vector<Invariant> v;
  auto add = [&](std::string g, std::string n, std::function<InvariantResult()> f) {
    v.push_back({std::move(g), std::move(n), std::move(f)});
  };

  add("core", "codec_roundtrip", [] {
    Codec c(3, 2);
    std::vector<int> tok{2, 1};
    bool ok = c.encode(tok) == 5;
    for (State s = 0; s < c.size(); ++s) ok = ok && c.encode(c.decode(s)) == s;
    return InvariantResult{ok, "K=3 L=2"};
  });
  add("core", "schedule_endpoints", [] {
    NoiseSchedule lin;
    NoiseSchedule geo{ScheduleKind::Geometric};
    double err = std::max({std::abs(lin.alpha(0.3) - 0.7), std::abs(lin.alpha(1.0)), std::abs(geo.alpha(0.0) - 1.0),
                           std::abs(geo.alpha(1.0) - kGeometricDelta)});
    return within(err, 1e-15);
  });
  add("core", "dirichlet_simplex", [] {
    auto p = DataTable::dirichlet(3, 3, 7);
    double s = 0.0;
    for (double x : p.probs) s += x;
    return within(std::abs(s - 1.0), 1e-12);
  });
  add("core", "grid_monotone", [] {
    for (auto term : {Terminal::One, Terminal::Floor}) {
      auto g = TimeGrid::uniform(8, term);
      for (int i = 1; i <= g.n(); ++i)
        if (!(g.t(i) > g.t(i - 1))) return InvariantResult{false, "not increasing"};
    }
    return InvariantResult{true, "n=8"};
  });

  add("kernels", "forward_example", [] {
    Row r = forward_kernel(make(4, 1, Family::UDM), 0, 0.0, 0.5);
    return within(max_abs(r, Row{0.625, 0.125, 0.125, 0.125}), 1e-15);
  });
  add("kernels", "chapman_kolmogorov", [] {
    double err = 0.0;
    for (auto f : {Family::UDM, Family::MDM}) {
      auto spec = make(3, 1, f);
      for (int x0 = 0; x0 < 3; ++x0) {
        Row a = forward_kernel(spec, x0, 0.0, 0.3);
        Row direct = forward_kernel(spec, x0, 0.0, 0.7);
        Row two(spec.vocab(), 0.0);
        for (int y = 0; y < spec.vocab(); ++y) {
          if (a[y] == 0.0) continue;
          Row b = y < 3 ? forward_kernel(spec, y, 0.3, 0.7) : Row{0, 0, 0, 1};
          for (int z = 0; z < spec.vocab(); ++z) two[z] += a[y] * b[z];
        }
        err = std::max(err, max_abs(two, direct));
      }
    }
    return within(err, 1e-14);
  });
  add("kernels", "bridge_rows_normalized", [] {
    double err = 0.0;
    Row mu{0.2, 0.5, 0.3};
    for (auto f : {Family::UDM, Family::MDM, Family::MaxCoupling})
      for (auto ext : {BridgeExtension::Canonical, BridgeExtension::Barycentric}) {
        auto spec = make(3, 1, f);
        for (int x = 0; x < spec.vocab(); ++x) {
          Row r = bridge(spec, ext, mu, x, 0.3, 0.6);
          double s = 0.0;
          for (double q : r) s += q;
          err = std::max(err, std::abs(s - 1.0));
        }
      }
    return within(err, 1e-12);
  });
  add("kernels", "extensions_agree_on_onehot", [] {
    auto spec = make(4, 1, Family::UDM);
    double err = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int x = 0; x < 4; ++x)
        err = std::max(err, max_abs(bridge(spec, BridgeExtension::Canonical, onehot(4, a), x, 0.2, 0.7),
                                    bridge(spec, BridgeExtension::Barycentric, onehot(4, a), x, 0.2, 0.7)));
    return within(err, 1e-12);
  });
  add("kernels", "mdm_bridge_example", [] {
    Row r = bridge(make(2, 1, Family::MDM), BridgeExtension::Canonical, onehot(2, 1), 2, 0.2, 0.8);
    return within(max_abs(r, Row{0.0, 0.75, 0.25}), 1e-12);
  });
  add("kernels", "maxcoupling_coincidence", [] {
    NoiseSchedule sc;
    auto j = maxcoupling_joint(sc, 2, 0, 0.2, 0.8);
    return within(std::abs(j[0] + j[3] - 0.7), 1e-12);
  });

  add("oracle", "marginal_example", [] {
    DataTable p0(2, 1, {0.9, 0.1});
    return within(max_abs(marginal(p0, make(2, 1, Family::UDM), 0.5).probs, Row{0.7, 0.3}), 1e-15);
  });
  add("oracle", "loo_excludes_position", [] {
    auto spec = make(2, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(2, 2, 3);
    Codec c(2, 2);
    double err = 0.0;
    for (State x = 0; x < c.size(); ++x)
      for (int l = 0; l < 2; ++l)
        for (int y = 0; y < 2; ++y) {
          auto a = loo_exact(p0, spec, x, 0.5), b = loo_exact(p0, spec, c.with_digit(x, l, y), 0.5);
          err = std::max(err, max_abs(a.span(l), b.span(l)));
        }
    return within(err, 0.0);
  });
  add("oracle", "gibbs_conditional_identity", [] {
    auto spec = make(3, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(3, 2, 11);
    double err = 0.0;
    for (double t : {0.25, 0.5, 0.9})
      for (State x = 0; x < 9; ++x) {
        auto loo = loo_exact(p0, spec, x, t);
        double a = spec.schedule.alpha(t);
        for (int l = 0; l < 2; ++l) {
          Row g = gibbs_conditional_exact(p0, spec, x, l, t);
          for (int k = 0; k < 3; ++k) err = std::max(err, std::abs(g[k] - (a * loo.at(l, k) + (1 - a) / 3)));
        }
      }
    return within(err, 1e-12);
  });
  for (auto lift : {Lifting::ReAUDM, Lifting::MUDM}) {
    add("oracle", lift == Lifting::ReAUDM ? "reaudm_matches_udm" : "mudm_matches_udm", [lift] {
      auto p0 = DataTable::dirichlet(2, 2, 5);
      auto grid = TimeGrid::uniform(3);
      auto lifted = lifted_pushforward(p0, make(2, 2, lift == Lifting::ReAUDM ? Family::AUDM : Family::MDM), grid, lift);
      auto ref = reverse_chain_marginals(p0, make(2, 2, Family::UDM), grid);
      double err = 0.0;
      for (int i = 0; i <= grid.n(); ++i) err = std::max(err, max_abs(lifted[i].probs, ref[i].probs));
      return within(err, 1e-10);
    });
  }

  add("conversions", "denoiser_loo_roundtrip", [] {
    auto spec = make(3, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(3, 2, 2);
    double err = 0.0;
    for (double t : {0.1, 0.5, 0.95})
      for (State x = 0; x < 9; ++x) {
        auto d = denoiser_exact(p0, spec, x, t);
        auto back = convert(convert(d, Representation::Denoiser, Representation::LeaveOneOut, x, t, spec),
                            Representation::LeaveOneOut, Representation::Denoiser, x, t, spec);
        err = std::max(err, max_abs(d.v, back.v));
      }
    return within(err, 1e-12);
  });
  add("conversions", "oracle_identities", [] {
    double err = 0.0;
    for (auto f : {Family::UDM, Family::MDM}) {
      auto spec = make(3, 2, f);
      auto p0 = DataTable::dirichlet(3, 2, 9);
      for (State x = 0; x < spec.num_states(); ++x) {
        double t = 0.6;
        auto d = denoiser_exact(p0, spec, x, t), loo = loo_exact(p0, spec, x, t), s = score_exact(p0, spec, x, t);
        auto d2 = convert(loo, Representation::LeaveOneOut, Representation::Denoiser, x, t, spec);
        auto s2 = convert(loo, Representation::LeaveOneOut, Representation::Score, x, t, spec);
        err = std::max({err, max_abs(d.v, d2.v), max_abs(s.v, s2.v)});
      }
    }
    return within(err, 1e-12);
  });
  add("conversions", "logit_shift_example", [] {
    NoiseSchedule sc;
    Row r = loo_logit_shift(Row{0.0, 0.0}, 0, 2.0 / 3.0, 2, sc);
    return within(std::abs(r[0] - std::log(2.0)), 1e-12);
  });
  add("conversions", "oracle_loo_sensitivity", [] {
    auto spec = make(3, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(3, 2, 4);
    OraclePredictor loo(p0, spec, Representation::LeaveOneOut);
    double m = 0.0;
    for (State x = 0; x < 9; ++x)
      for (int l = 0; l < 2; ++l) m = std::max(m, loo_sensitivity(loo, x, l, 0.5));
    return within(m, 1e-12);
  });

  add("losses", "phi_example", [] { return within(std::abs(phi(1.0, 2.0) - (1.0 - std::log(2.0))), 1e-15); });
  add("losses", "nelbo_bounds_entropy", [] {
    auto spec = make(2, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(2, 2, 8);
    OraclePredictor d(p0, spec, Representation::Denoiser);
    double v = nelbo_discrete(p0, spec, d, {}, TimeGrid::uniform(4));
    return InvariantResult{v >= p0.entropy() - 1e-12, "nelbo " + sci(v) + " vs H " + sci(p0.entropy())};
  });
  add("losses", "mdm_parameterizations_agree", [] {
    auto spec = make(3, 1, Family::MDM);
    StepRule a(spec, {Parameterization::Marginalization, BridgeExtension::Canonical}, Representation::Denoiser, 0.3, 0.7);
    StepRule b(spec, {Parameterization::BridgePlugIn, BridgeExtension::Canonical}, Representation::Denoiser, 0.3, 0.7);
    Row mu{0.2, 0.3, 0.5};
    double err = 0.0;
    for (int x = 0; x < 4; ++x) err = std::max(err, max_abs(a.row(mu, x), b.row(mu, x)));
    return within(err, 1e-14);
  });
  add("losses", "uniform_cross_entropy", [] {
    auto spec = make(3, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(3, 2, 1);
    auto grid = TimeGrid::uniform(4);
    TablePredictor t(spec, Representation::Denoiser, TablePredictor::grid_bins(grid));
    double v = cross_entropy_denoising(p0, spec, t, Quadrature::right_endpoint(grid));
    return within(std::abs(v - 2.0 * std::log(3.0)), 1e-12);
  });

  add("train", "gradient_check", [] {
    auto spec = make(2, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(2, 2, 6);
    LossSpec ls;
    auto obj = make_objective(p0, spec, ls);
    auto t = TablePredictor::random(spec, Representation::Denoiser, TablePredictor::grid_bins(ls.grid), 3);
    return within(grad_check(t, *obj, 1e-5, 1, 32).max_rel_error, 1e-4);
  });
  add("train", "loss_decreases", [] {
    auto spec = make(2, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(2, 2, 6);
    LossSpec ls;
    TrainConfig cfg;
    cfg.steps = 50;
    auto r = train(TablePredictor(spec, Representation::Denoiser, TablePredictor::grid_bins(ls.grid)), p0, ls, cfg);
    return InvariantResult{r.trace.back().loss < r.trace.front().loss, "50 steps"};
  });

  add("samplers", "margin_example", [] {
    return within(std::abs(margin_score(Row{0.3, 0.7}, 0) + std::log(0.7 / 0.3)), 1e-12);
  });
  add("samplers", "modifier_identity", [] {
    Row r{0.1, 0.6, 0.3};
    return within(std::max(max_abs(apply_modifier(Modifier::temperature(1.0), r), r),
                           max_abs(apply_modifier(Modifier::top_p(1.0), r), r)),
                  0.0);
  });
  add("samplers", "counter_rng_deterministic", [] {
    CounterRng a(1, 2, 3, 4, 5), b(1, 2, 3, 4, 5), c(1, 2, 3, 4, 6);
    bool ok = true;
    for (int i = 0; i < 8; ++i) ok = ok && a() == b();
    return InvariantResult{ok && a() != c(), "keyed streams"};
  });
  add("samplers", "gibbs_kernel_invariance", [] {
    auto spec = make(3, 2, Family::UDM);
    auto p0 = DataTable::dirichlet(3, 2, 12);
    double err = 0.0;
    for (double t : {0.25, 0.5, 0.9}) {
      auto pt = marginal(p0, spec, t).probs;
      for (int l = 0; l < 2; ++l) {
        auto out = gibbs_pushforward(pt, spec, [&](State x) { return gibbs_conditional_exact(p0, spec, x, l, t); }, l);
        err = std::max(err, max_abs(out, pt));
      }
    }
    return within(err, 1e-12);
  });

  add("eval", "tv_example", [] { return within(std::abs(tv_distance(Row{0.9, 0.1}, Row{0.6, 0.4}) - 0.3), 1e-15); });
  add("eval", "tv_metric_axioms", [] {
    std::mt19937_64 rng(4);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      auto a = DataTable::dirichlet(4, 1, rng()).probs, b = DataTable::dirichlet(4, 1, rng()).probs,
           c = DataTable::dirichlet(4, 1, rng()).probs;
      worst = std::max(worst, std::abs(tv_distance(a, b) - tv_distance(b, a)));
      worst = std::max(worst, tv_distance(a, c) - tv_distance(a, b) - tv_distance(b, c));
    }
    return within(worst, 1e-12);
  });
  add("eval", "chi_square_exact_counts", [] {
    ExactDistribution d{"test", {0.5, 0.25, 0.25}};
    EmpiricalDistribution e{{500, 250, 250}, 1000};
    return within(chi_square_gof(e, d).statistic, 1e-12);
  });
  return v;
}

}  // namespace

const std::vector<Invariant>& invariant_registry() {
  static const std::vector<Invariant> reg = build();
  return reg;
}

std::vector<InvariantOutcome> run_invariants(const std::optional<std::string>& group) {
  std::vector<InvariantOutcome> out;
  for (const auto& inv : invariant_registry()) {
    if (group && inv.group != *group) continue;
    auto t0 = std::chrono::steady_clock::now();
    InvariantOutcome o{&inv, {}, 0.0};
    try {
      o.result = inv.fn();
    } catch (const std::exception& e) {
      o.result = {false, std::string("exception: ") + e.what()};
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace revdiff
