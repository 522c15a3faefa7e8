#include "revdiff/losses.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "revdiff/oracle.hpp"

namespace revdiff {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Context {
  State xt;
  std::optional<State> aux;
  double w;
  PredictionGrid dstar;
};

std::vector<Context> contexts(const DataTable& p0, const ProcessSpec& spec, double t) {
  std::vector<Context> out;
  if (spec.family == Family::AUDM) {
    std::size_t N = spec.num_clean_states();
    for (State u = 0; u < N; ++u) {
      auto pxu = audm_conditional_marginal(p0, spec, u, t);
      for (State x = 0; x < N; ++x)
        if (pxu[x] > 0.0) out.push_back({x, u, pxu[x] / N, audm_denoiser_exact(p0, spec, x, u, t)});
    }
    return out;
  }
  auto pt = marginal(p0, spec, t);
  for (State x = 0; x < pt.probs.size(); ++x)
    if (pt.probs[x] > 0.0) out.push_back({x, std::nullopt, pt.probs[x], denoiser_exact(p0, spec, x, t)});
  return out;
}

void check_spec(const DataTable& p0, const ProcessSpec& spec) {
  if (p0.K != spec.K || p0.L != spec.L) throw DomainError("loss: p0 does not match spec");
  spec.validate();
}

double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

// Rows of a predictor converted to `to` at each position, with the conversions kept for backprop.
struct ConvertedRows {
  PredictionGrid raw;
  std::vector<Row> rows;
  std::vector<RowConversion> conv;
};

ConvertedRows converted_rows(const Predictor& p, const ProcessSpec& spec, Representation to, State xt,
                             std::optional<State> aux, double t) {
  ConvertedRows cr;
  cr.raw = p.predict(xt, t, aux);
  Codec c(spec.vocab(), spec.L);
  for (int l = 0; l < spec.L; ++l) {
    cr.conv.emplace_back(spec, p.representation(), to, c.digit(xt, l), t);
    cr.rows.push_back(cr.conv.back().apply(cr.raw.span(l)));
  }
  return cr;
}

void push_grad(GradSink* sink, const ConvertedRows& cr, const Context& ctx, double t, int l, const Row& g) {
  if (!sink) return;
  Row gr = cr.conv[l].vjp(cr.raw.span(l), g);
  sink->add(ctx.xt, ctx.aux, t, l, gr);
}

double prefactor_mask(const NoiseSchedule& sc, double t) {
  double a = sc.alpha(t);
  if (a >= 1.0) throw DomainError("quadrature node where 1 - alpha_t = 0");
  return -sc.alpha_prime(t) / (1.0 - a);
}

double prefactor_ctmc(const NoiseSchedule& sc, double t, int K) {
  double a = sc.alpha(t);
  if (a >= 1.0 || a <= 0.0) throw DomainError("quadrature node where the CTMC prefactor is singular");
  return sc.beta(t) / K;
}

// ---------------------------------------------------------------- discrete NELBO

class DiscreteNelbo : public Objective {
 public:
  DiscreteNelbo(const DataTable& p0, const ProcessSpec& spec, ParamChoice param, const TimeGrid& grid)
      : p0_(p0), spec_(spec), param_(param), grid_(grid) {
    check_spec(p0, spec);
    if (spec.family == Family::AUDM) throw ArgumentError("nelbo_discrete: AUDM uses the continuous NELBO");
    Codec c(spec.vocab(), spec.L);
    int K = spec.K;
    for (int i = 1; i <= grid.n(); ++i) {
      double s = grid.t(i - 1), t = grid.t(i);
      Step st;
      st.ctx = contexts(p0, spec, t);
      for (const auto& ctx : st.ctx) {
        for (int l = 0; l < spec.L; ++l) {
          int x = c.digit(ctx.xt, l);
          Row bbar(spec.vocab(), 0.0);
          double c0 = 0.0;
          for (int k = 0; k < K; ++k) {
            double dk = ctx.dstar.at(l, k);
            if (dk == 0.0) continue;
            Row b = bridge_onehot(spec, k, x, s, t);
            for (std::size_t j = 0; j < b.size(); ++j) {
              bbar[j] += dk * b[j];
              c0 += dk * xlogx(b[j]);
            }
          }
          st.bbar.push_back(std::move(bbar));
          st.c0.push_back(c0);
        }
      }
      steps_.push_back(std::move(st));
    }
  }

  std::string name() const override { return "nelbo_discrete"; }
  std::string descriptor() const override {
    return "grid[n=" + std::to_string(grid_.n()) + "]/" + param_name(param_);
  }

  double value(const Predictor& p, GradSink* sink) const override {
    if (p.spec().family != spec_.family || p.spec().K != spec_.K || p.spec().L != spec_.L)
      throw ArgumentError("nelbo_discrete: predictor spec does not match");
    if (!sink && p.has_joint() && param_.kind == Parameterization::Marginalization) return exact_value(p);
    Codec c(spec_.vocab(), spec_.L);
    double total = 0.0;
    for (int i = 1; i <= grid_.n(); ++i) {
      double s = grid_.t(i - 1), t = grid_.t(i);
      StepRule rule(spec_, param_, p.representation(), s, t);
      const Step& st = steps_[i - 1];
      std::size_t idx = 0;
      for (const auto& ctx : st.ctx) {
        PredictionGrid G = p.predict(ctx.xt, t, ctx.aux);
        for (int l = 0; l < spec_.L; ++l, ++idx) {
          int x = c.digit(ctx.xt, l);
          Row m = rule.row(G.span(l), x);
          const Row& bbar = st.bbar[idx];
          double term = st.c0[idx];
          Row gm(m.size(), 0.0);
          for (std::size_t j = 0; j < m.size(); ++j) {
            if (bbar[j] == 0.0) continue;
            if (m[j] <= 0.0) {
              term = kInf;
              gm[j] = -kInf;
              continue;
            }
            term -= bbar[j] * std::log(m[j]);
            gm[j] = -ctx.w * bbar[j] / m[j];
          }
          total += ctx.w * term;
          if (sink) sink->add(ctx.xt, ctx.aux, t, l, rule.vjp(G.span(l), x, gm));
        }
      }
    }
    return total;
  }

 private:
  struct Step {
    std::vector<Context> ctx;
    std::vector<Row> bbar;   // per (ctx, l)
    std::vector<double> c0;  // per (ctx, l)
  };

  // Exact non-factorized reverse kernel from the predictor's joint posterior.
  double exact_value(const Predictor& p) const {
    Codec clean(spec_.K, spec_.L), noisy(spec_.vocab(), spec_.L);
    int L = spec_.L;
    double total = 0.0;
    for (int i = 1; i <= grid_.n(); ++i) {
      double s = grid_.t(i - 1), t = grid_.t(i);
      for (const auto& ctx : steps_[i - 1].ctx) {
        auto post = joint_posterior(p0_, spec_, ctx.xt, t);
        auto model_post = p.joint_posterior(ctx.xt, t, ctx.aux);
        auto bridge_law = [&](State x0) {
          std::vector<Row> rows(L);
          for (int l = 0; l < L; ++l) rows[l] = bridge_onehot(spec_, clean.digit(x0, l), noisy.digit(ctx.xt, l), s, t);
          std::vector<double> out(noisy.size());
          for (State xs = 0; xs < noisy.size(); ++xs) {
            double v = 1.0;
            for (int l = 0; l < L && v != 0.0; ++l) v *= rows[l][noisy.digit(xs, l)];
            out[xs] = v;
          }
          return out;
        };
        std::vector<double> R(noisy.size(), 0.0);
        for (State x0 = 0; x0 < clean.size(); ++x0) {
          if (model_post[x0] == 0.0) continue;
          auto b = bridge_law(x0);
          for (State xs = 0; xs < noisy.size(); ++xs) R[xs] += model_post[x0] * b[xs];
        }
        double term = 0.0;
        for (State x0 = 0; x0 < clean.size(); ++x0) {
          if (post[x0] == 0.0) continue;
          term += post[x0] * kl_divergence(bridge_law(x0), R);
        }
        total += ctx.w * term;
      }
    }
    return total;
  }

  DataTable p0_;
  ProcessSpec spec_;
  ParamChoice param_;
  TimeGrid grid_;
  std::vector<Step> steps_;
};

// ---------------------------------------------------------------- quadrature-based objectives

class QuadObjective : public ContinuousObjective {
 public:
  QuadObjective(const DataTable& p0, const ProcessSpec& spec, Quadrature quad, bool with_recon)
      : p0_(p0), spec_(spec), quad_(std::move(quad)), recon_(with_recon) {
    check_spec(p0, spec);
    if (quad_.nodes.empty()) throw DomainError("empty quadrature");
    for (double t : quad_.nodes) ctx_.push_back(contexts(p0, spec, t));
  }

  std::string descriptor() const override { return quad_.descriptor + (recon_ ? "+recon" : ""); }

  double value(const Predictor& p, GradSink* sink) const override {
    check_predictor(p);
    double total = 0.0;
    for (std::size_t q = 0; q < quad_.nodes.size(); ++q) {
      double t = quad_.nodes[q];
      double scale = quad_.weights[q] * prefactor(t);
      total += scale * expectation(p, ctx_[q], t, scale, sink);
    }
    if (recon_) total += reconstruction(p, ctx_.front(), quad_.nodes.front(), sink);
    return total;
  }

  double integrand(const Predictor& p, double t) const override {
    check_predictor(p);
    return prefactor(t) * expectation(p, contexts(p0_, spec_, t), t, 0.0, nullptr);
  }

 protected:
  virtual void check_predictor(const Predictor& p) const {
    if (p.spec().family != spec_.family || p.spec().K != spec_.K || p.spec().L != spec_.L)
      throw ArgumentError(name() + ": predictor spec does not match");
  }
  virtual double prefactor(double t) const = 0;
  // E[...] at time t; gradients are scaled by `scale`.
  virtual double expectation(const Predictor& p, const std::vector<Context>& ctx, double t, double scale,
                             GradSink* sink) const = 0;
  virtual double reconstruction(const Predictor&, const std::vector<Context>&, double, GradSink*) const { return 0.0; }

  // -sum_k d*_k log xhat_k over rows, optionally restricted to absorbed positions.
  double decode_term(const Predictor& p, const std::vector<Context>& ctx, double t, GradSink* sink,
                     bool absorbed_only) const {
    Codec c(spec_.vocab(), spec_.L), cu(spec_.K, spec_.L);
    double total = 0.0;
    for (const auto& cx : ctx) {
      auto cr = converted_rows(p, spec_, Representation::Denoiser, cx.xt, cx.aux, t);
      for (int l = 0; l < spec_.L; ++l) {
        int x = c.digit(cx.xt, l);
        if (absorbed_only && x != absorbing_token(cx, l, cu)) continue;
        const Row& xh = cr.rows[l];
        Row g(spec_.K, 0.0);
        double v = 0.0;
        for (int k = 0; k < spec_.K; ++k) {
          double dk = cx.dstar.at(l, k);
          if (dk == 0.0) continue;
          v -= dk * std::log(xh[k]);
          g[k] = -cx.w * dk / xh[k];
        }
        total += cx.w * v;
        push_grad(sink, cr, cx, t, l, g);
      }
    }
    return total;
  }

  int absorbing_token(const Context& cx, int l, const Codec& cu) const {
    return spec_.family == Family::AUDM ? cu.digit(*cx.aux, l) : spec_.K;
  }

  DataTable p0_;
  ProcessSpec spec_;
  Quadrature quad_;
  bool recon_;
  std::vector<std::vector<Context>> ctx_;
};

class CrossEntropy : public QuadObjective {
 public:
  CrossEntropy(const DataTable& p0, const ProcessSpec& spec, Quadrature quad) : QuadObjective(p0, spec, quad, false) {
    for (double w : quad_.weights) wsum_ += w;
  }
  std::string name() const override { return "cross_entropy"; }

  double value(const Predictor& p, GradSink* sink) const override {
    check_predictor(p);
    double total = 0.0;
    for (std::size_t q = 0; q < quad_.nodes.size(); ++q) {
      double scale = quad_.weights[q] / wsum_;
      total += scale * expectation(p, ctx_[q], quad_.nodes[q], scale, sink);
    }
    return total;
  }

 protected:
  double prefactor(double) const override { return 1.0; }
  double expectation(const Predictor& p, const std::vector<Context>& ctx, double t, double scale,
                     GradSink* sink) const override {
    Codec c(spec_.vocab(), spec_.L);
    double total = 0.0;
    for (const auto& cx : ctx) {
      auto cr = converted_rows(p, spec_, Representation::Denoiser, cx.xt, cx.aux, t);
      for (int l = 0; l < spec_.L; ++l) {
        const Row& d = cr.rows[l];
        Row g(spec_.K, 0.0);
        double v = 0.0;
        for (int k = 0; k < spec_.K; ++k) {
          double dk = cx.dstar.at(l, k);
          if (dk == 0.0) continue;
          if (d[k] <= 0.0) {
            v = kInf;
            g[k] = -kInf;
            continue;
          }
          v -= dk * std::log(d[k]);
          g[k] = -scale * cx.w * dk / d[k];
        }
        total += cx.w * v;
        push_grad(sink, cr, cx, t, l, g);
      }
    }
    return total;
  }

 private:
  double wsum_ = 0.0;
};

// Carry-over NELBO for AUDM; with an MDM spec the absorbing token is the mask and xhat_m = 0.
class AudmNelbo : public QuadObjective {
 public:
  AudmNelbo(const DataTable& p0, const ProcessSpec& spec, Quadrature quad, ContinuousOptions o)
      : QuadObjective(p0, spec, quad, o.reconstruction) {
    if (spec.family != Family::AUDM && spec.family != Family::MDM)
      throw ArgumentError("audm_nelbo_continuous: AUDM or MDM spec required");
  }
  std::string name() const override { return "audm_nelbo"; }

 protected:
  double prefactor(double t) const override { return prefactor_mask(spec_.schedule, t); }
  double expectation(const Predictor& p, const std::vector<Context>& ctx, double t, double scale,
                     GradSink* sink) const override {
    Codec c(spec_.vocab(), spec_.L), cu(spec_.K, spec_.L);
    double total = 0.0;
    for (const auto& cx : ctx) {
      auto cr = converted_rows(p, spec_, Representation::Denoiser, cx.xt, cx.aux, t);
      for (int l = 0; l < spec_.L; ++l) {
        int x = c.digit(cx.xt, l);
        int u = absorbing_token(cx, l, cu);
        if (x != u) continue;
        const Row& xh = cr.rows[l];
        Row g(spec_.K, 0.0);
        double xu = u < spec_.K ? xh[u] : 0.0;
        double v = 1.0 - xu;
        if (u < spec_.K) g[u] = -scale * cx.w;
        for (int k = 0; k < spec_.K; ++k) {
          double dk = cx.dstar.at(l, k);
          if (k == u || dk == 0.0) continue;
          v -= dk * (1.0 + std::log(xh[k]));
          g[k] -= scale * cx.w * dk / xh[k];
        }
        total += cx.w * v;
        push_grad(sink, cr, cx, t, l, g);
      }
    }
    return total;
  }
  double reconstruction(const Predictor& p, const std::vector<Context>& ctx, double t, GradSink* sink) const override {
    return decode_term(p, ctx, t, sink, true);
  }
};

class MdmNelbo : public QuadObjective {
 public:
  MdmNelbo(const DataTable& p0, const ProcessSpec& spec, Quadrature quad, ContinuousOptions o)
      : QuadObjective(p0, spec, quad, o.reconstruction) {
    if (spec.family != Family::MDM) throw ArgumentError("mdm_nelbo_continuous: MDM spec required");
  }
  std::string name() const override { return "mdm_nelbo"; }

 protected:
  double prefactor(double t) const override {
    const auto& sc = spec_.schedule;
    double a = sc.alpha(t);
    if (a >= 1.0) throw DomainError("quadrature node where 1 - alpha_t = 0");
    return sc.alpha_prime(t) / (a - 1.0);
  }
  double expectation(const Predictor& p, const std::vector<Context>& ctx, double t, double scale,
                     GradSink* sink) const override {
    Codec c(spec_.vocab(), spec_.L);
    double total = 0.0;
    for (const auto& cx : ctx) {
      PredictionGrid raw = p.predict(cx.xt, t, cx.aux);
      for (int l = 0; l < spec_.L; ++l) {
        int x = c.digit(cx.xt, l);
        if (x != spec_.mask()) continue;
        RowConversion conv(spec_, p.representation(), Representation::Denoiser, x, t);
        Row xh = conv.apply(raw.span(l));
        double nll = 0.0;
        Row g(spec_.K, 0.0);
        for (int k = 0; k < spec_.K; ++k) {
          double dk = cx.dstar.at(l, k);
          if (dk == 0.0) continue;
          nll += dk * -std::log(xh[k]);
          g[k] = -scale * cx.w * dk / xh[k];
        }
        total += cx.w * nll;
        if (sink) sink->add(cx.xt, cx.aux, t, l, conv.vjp(raw.span(l), g));
      }
    }
    return total;
  }
  double reconstruction(const Predictor& p, const std::vector<Context>& ctx, double t, GradSink* sink) const override {
    return decode_term(p, ctx, t, sink, true);
  }
};

class MaxCouplingNelbo : public QuadObjective {
 public:
  MaxCouplingNelbo(const DataTable& p0, const ProcessSpec& spec, Quadrature quad, ContinuousOptions o)
      : QuadObjective(p0, spec, quad, o.reconstruction) {
    if (spec.family != Family::MaxCoupling && spec.family != Family::UDM)
      throw ArgumentError("maxcoupling_nelbo: MaxCoupling spec required");
  }
  std::string name() const override { return "maxcoupling_nelbo"; }

 protected:
  void check_predictor(const Predictor& p) const override {
    auto f = p.spec().family;
    if ((f != Family::MaxCoupling && f != Family::UDM) || p.spec().K != spec_.K || p.spec().L != spec_.L)
      throw ArgumentError(name() + ": predictor spec does not match");
  }
  double prefactor(double t) const override { return prefactor_mask(spec_.schedule, t); }
  double expectation(const Predictor& p, const std::vector<Context>& ctx, double t, double scale,
                     GradSink* sink) const override {
    Codec c(spec_.vocab(), spec_.L);
    double total = 0.0;
    for (const auto& cx : ctx) {
      auto cr = converted_rows(p, spec_, Representation::Denoiser, cx.xt, cx.aux, t);
      for (int l = 0; l < spec_.L; ++l) {
        int x = c.digit(cx.xt, l);
        const Row& xh = cr.rows[l];
        Row g(spec_.K, 0.0);
        double v = 1.0 - xh[x];
        g[x] = -scale * cx.w;
        for (int k = 0; k < spec_.K; ++k) {
          double dk = cx.dstar.at(l, k);
          if (k == x || dk == 0.0) continue;
          v -= dk * (1.0 + std::log(xh[k]));
          g[k] -= scale * cx.w * dk / xh[k];
        }
        total += cx.w * v;
        push_grad(sink, cr, cx, t, l, g);
      }
    }
    return total;
  }
  double reconstruction(const Predictor& p, const std::vector<Context>& ctx, double t, GradSink* sink) const override {
    return decode_term(p, ctx, t, sink, false);
  }
};

// Phi-sum objectives sharing the conditional-score first argument.
class PhiObjective : public QuadObjective {
 public:
  PhiObjective(const DataTable& p0, const ProcessSpec& spec, Quadrature quad, Representation rows)
      : QuadObjective(p0, spec, quad, false), rows_(rows) {
    if (spec.family != Family::UDM) throw ArgumentError("CTMC ELBO: UDM spec required");
  }

 protected:
  double prefactor(double t) const override { return prefactor_ctmc(spec_.schedule, t, spec_.K); }

  // Model argument b(y) and db/drow for destination y.
  virtual double model_arg(const Row& row, int x, int y, double a, Row* db) const = 0;

  double expectation(const Predictor& p, const std::vector<Context>& ctx, double t, double scale,
                     GradSink* sink) const override {
    int K = spec_.K;
    double a = spec_.schedule.alpha(t);
    Codec c(K, spec_.L);
    auto lik = [&](int k, int y) { return (k == y ? a : 0.0) + (1.0 - a) / K; };
    double total = 0.0;
    for (const auto& cx : ctx) {
      auto cr = converted_rows(p, spec_, rows_, cx.xt, cx.aux, t);
      for (int l = 0; l < spec_.L; ++l) {
        int x = c.digit(cx.xt, l);
        const Row& row = cr.rows[l];
        Row g(row.size(), 0.0), db(row.size());
        double v = 0.0;
        for (int y = 0; y < K; ++y) {
          if (y == x) continue;
          double abar = 0.0, alog = 0.0;
          for (int k = 0; k < K; ++k) {
            double dk = cx.dstar.at(l, k);
            if (dk == 0.0) continue;
            double ak = lik(k, y) / lik(k, x);
            abar += dk * ak;
            alog += dk * xlogx(ak);
          }
          std::fill(db.begin(), db.end(), 0.0);
          double b = model_arg(row, x, y, a, &db);
          if (!(b > 0.0)) throw DomainError("Phi: model argument must be positive");
          v += b - abar + alog - abar * std::log(b);
          double gb = scale * cx.w * (1.0 - abar / b);
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += gb * db[j];
        }
        total += cx.w * v;
        push_grad(sink, cr, cx, t, l, g);
      }
    }
    return total;
  }

  Representation rows_;
};

class CtmcElbo : public PhiObjective {
 public:
  CtmcElbo(const DataTable& p0, const ProcessSpec& spec, Quadrature quad)
      : PhiObjective(p0, spec, std::move(quad), Representation::Score) {}
  std::string name() const override { return "ctmc_elbo"; }

 protected:
  double model_arg(const Row& row, int, int y, double, Row* db) const override {
    (*db)[y] = 1.0;
    return row[y];
  }
};

class LinearBridgeElbo : public PhiObjective {
 public:
  LinearBridgeElbo(const DataTable& p0, const ProcessSpec& spec, Quadrature quad)
      : PhiObjective(p0, spec, std::move(quad), Representation::Denoiser) {}
  std::string name() const override { return "linear_bridge_elbo"; }

 protected:
  double model_arg(const Row& row, int x, int y, double a, Row* db) const override {
    int K = spec_.K;
    double c1 = K * a / (1.0 + (K - 1) * a), c2 = K * a / (1.0 - a);
    (*db)[x] = -c1;
    (*db)[y] = c2;
    return 1.0 - c1 * row[x] + c2 * row[y];
  }
};

}  // namespace

// ---------------------------------------------------------------- step rule

std::string param_name(ParamChoice p) {
  if (p.kind == Parameterization::Marginalization) return "marginalization";
  return p.ext == BridgeExtension::Canonical ? "plugin_canonical" : "plugin_barycentric";
}

ParamChoice parse_param(const std::string& s) {
  if (s == "marginalization") return {Parameterization::Marginalization, BridgeExtension::Canonical};
  if (s == "plugin" || s == "plugin_canonical") return {Parameterization::BridgePlugIn, BridgeExtension::Canonical};
  if (s == "plugin_barycentric") return {Parameterization::BridgePlugIn, BridgeExtension::Barycentric};
  throw ConfigError("unknown parameterization: " + s);
}

Representation StepRule::target_for(const ProcessSpec& spec, ParamChoice param, Representation source) {
  switch (spec.family) {
    case Family::UDM:
      if (param.kind == Parameterization::BridgePlugIn && param.ext == BridgeExtension::Canonical)
        return Representation::LeaveOneOut;
      return Representation::Denoiser;
    case Family::MDM:
      return source == Representation::Score ? Representation::LeaveOneOut : source;
    case Family::MaxCoupling:
      return Representation::Denoiser;
    case Family::AUDM:
      break;
  }
  throw ArgumentError("step rule: AUDM steps use the carry-over bridge");
}

StepRule::StepRule(const ProcessSpec& spec, ParamChoice param, Representation source, double s, double t)
    : spec_(spec), param_(param), source_(source), target_(target_for(spec, param, source)), s_(s), t_(t) {
  if (s > t) throw OrderingError("step rule: require s <= t");
  identity_ = s == t;
  canonical_ = spec.family == Family::UDM && target_ == Representation::LeaveOneOut;
  if (identity_ || canonical_) return;
  int K = spec.K, V = spec.vocab();
  onehot_.resize(static_cast<std::size_t>(V) * K);
  for (int x = 0; x < V; ++x)
    for (int k = 0; k < K; ++k) {
      if (spec.family == Family::MDM && x != K && x != k) continue;
      onehot_[static_cast<std::size_t>(x) * K + k] = bridge_onehot(spec, k, x, s, t);
    }
}

Row StepRule::row_from_target(std::span<const double> mu, int x) const {
  int K = spec_.K, V = spec_.vocab();
  if (identity_ || (spec_.family == Family::MDM && x != K)) {
    Row r(V, 0.0);
    r[x] = 1.0;
    return r;
  }
  if (canonical_) return bridge(spec_, BridgeExtension::Canonical, mu, x, s_, t_);
  Row r(V, 0.0);
  for (int k = 0; k < K; ++k) {
    if (mu[k] == 0.0) continue;
    const Row& b = onehot_[static_cast<std::size_t>(x) * K + k];
    for (int j = 0; j < V; ++j) r[j] += mu[k] * b[j];
  }
  return r;
}

Row StepRule::row(std::span<const double> pred_row, int x) const {
  if (source_ == target_) return row_from_target(pred_row, x);
  if (spec_.family == Family::MDM && x != spec_.K) return row_from_target(pred_row, x);
  RowConversion conv(spec_, source_, target_, x, t_);
  return row_from_target(conv.apply(pred_row), x);
}

Row StepRule::vjp_from_target(std::span<const double> mu, int x, std::span<const double> g) const {
  int K = spec_.K, V = spec_.vocab();
  Row out(K, 0.0);
  if (identity_ || (spec_.family == Family::MDM && x != K)) return out;
  if (canonical_) {
    const auto& sc = spec_.schedule;
    double as = sc.alpha(s_), at = sc.alpha(t_);
    double den = K * at * mu[x] + 1.0 - at;
    Row m = bridge(spec_, BridgeExtension::Canonical, mu, x, s_, t_);
    double gm = 0.0;
    for (int j = 0; j < K; ++j) gm += g[j] * m[j];
    for (int i = 0; i < K; ++i) out[i] = (as - at) * g[i] / den;
    out[x] += K * at * (g[x] - gm) / den;
    return out;
  }
  for (int k = 0; k < K; ++k) {
    const Row& b = onehot_[static_cast<std::size_t>(x) * K + k];
    for (int j = 0; j < V; ++j) out[k] += g[j] * b[j];
  }
  return out;
}

Row StepRule::vjp(std::span<const double> pred_row, int x, std::span<const double> g) const {
  if (source_ == target_ || (spec_.family == Family::MDM && x != spec_.K)) {
    Row r = vjp_from_target(pred_row, x, g);
    r.resize(pred_row.size(), 0.0);
    return r;
  }
  RowConversion conv(spec_, source_, target_, x, t_);
  Row mu = conv.apply(pred_row);
  return conv.vjp(pred_row, vjp_from_target(mu, x, g));
}

// ---------------------------------------------------------------- quadrature

Quadrature Quadrature::trapezoid(double a, double b, int M) {
  if (M < 1) throw DomainError("trapezoid: M must be >= 1");
  if (!(a >= 0.0 && b <= 1.0 && a < b)) throw DomainError("trapezoid: require 0 <= a < b <= 1");
  Quadrature q;
  double h = (b - a) / M;
  for (int i = 0; i <= M; ++i) {
    q.nodes.push_back(i == M ? b : a + h * i);
    q.weights.push_back((i == 0 || i == M) ? h / 2 : h);
  }
  std::ostringstream os;
  os << "trapezoid[" << a << "," << b << "]x" << M;
  q.descriptor = os.str();
  return q;
}

Quadrature Quadrature::log_trapezoid(double a, double b, int M) {
  if (M < 1) throw DomainError("log_trapezoid: M must be >= 1");
  if (!(a > 0.0 && b <= 1.0 && a < b)) throw DomainError("log_trapezoid: require 0 < a < b <= 1");
  Quadrature q;
  double span = std::log(b / a), h = 1.0 / M;
  for (int i = 0; i <= M; ++i) {
    double t = i == 0 ? a : (i == M ? b : a * std::exp(span * h * i));
    q.nodes.push_back(t);
    q.weights.push_back(((i == 0 || i == M) ? h / 2 : h) * span * t);
  }
  std::ostringstream os;
  os << "log_trapezoid[" << a << "," << b << "]x" << M;
  q.descriptor = os.str();
  return q;
}

Quadrature Quadrature::right_endpoint(const TimeGrid& grid) {
  Quadrature q;
  for (int i = 1; i <= grid.n(); ++i) {
    q.nodes.push_back(grid.t(i));
    q.weights.push_back(grid.t(i) - grid.t(i - 1));
  }
  q.descriptor = "right_endpoint[n=" + std::to_string(grid.n()) + "]";
  return q;
}

Quadrature default_quadrature(LossKind kind, const NoiseSchedule& sched, int M) {
  double eps = sched.eps_floor;
  double hi = 1.0;
  if ((kind == LossKind::Ctmc || kind == LossKind::LinearBridge) && sched.alpha(1.0) == 0.0) hi = 1.0 - eps;
  return Quadrature::log_trapezoid(eps, hi, M);
}

// ---------------------------------------------------------------- misc

double phi(double a, double b) {
  if (!(b > 0.0)) throw DomainError("phi: b must be positive");
  if (a < 0.0) throw DomainError("phi: a must be nonnegative");
  if (a == 0.0) return b;
  return b - a + a * std::log(a / b);
}

double prior_kl(const DataTable& p0, const ProcessSpec& spec, double t) {
  check_spec(p0, spec);
  if (spec.family == Family::AUDM) {
    std::size_t N = spec.num_clean_states();
    double kl = 0.0;
    for (State u = 0; u < N; ++u) {
      auto pxu = audm_conditional_marginal(p0, spec, u, t);
      for (State x = 0; x < N; ++x)
        if (pxu[x] > 0.0) kl += x == u ? pxu[x] * std::log(pxu[x]) / N : kInf;
    }
    return kl;
  }
  auto pt = marginal(p0, spec, t);
  std::vector<double> ref(pt.probs.size(), 0.0);
  if (spec.family == Family::MDM) {
    ref.back() = 1.0;
  } else {
    std::fill(ref.begin(), ref.end(), 1.0 / static_cast<double>(ref.size()));
  }
  return kl_divergence(pt.probs, ref);
}

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::NelboDiscrete: return "nelbo_discrete";
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::AudmContinuous: return "audm_nelbo";
    case LossKind::MdmContinuous: return "mdm_nelbo";
    case LossKind::MaxCoupling: return "maxcoupling_nelbo";
    case LossKind::Ctmc: return "ctmc_elbo";
    case LossKind::LinearBridge: return "linear_bridge_elbo";
  }
  return "?";
}

LossKind parse_loss(const std::string& s) {
  for (auto k : {LossKind::NelboDiscrete, LossKind::CrossEntropy, LossKind::AudmContinuous, LossKind::MdmContinuous,
                 LossKind::MaxCoupling, LossKind::Ctmc, LossKind::LinearBridge})
    if (loss_name(k) == s) return k;
  throw ConfigError("unknown loss: " + s);
}

std::unique_ptr<ContinuousObjective> make_continuous(const DataTable& p0, const ProcessSpec& spec, LossKind kind,
                                                     const Quadrature& quad, ContinuousOptions opts) {
  switch (kind) {
    case LossKind::AudmContinuous: return std::make_unique<AudmNelbo>(p0, spec, quad, opts);
    case LossKind::MdmContinuous: return std::make_unique<MdmNelbo>(p0, spec, quad, opts);
    case LossKind::MaxCoupling: return std::make_unique<MaxCouplingNelbo>(p0, spec, quad, opts);
    case LossKind::Ctmc: return std::make_unique<CtmcElbo>(p0, spec, quad);
    case LossKind::LinearBridge: return std::make_unique<LinearBridgeElbo>(p0, spec, quad);
    case LossKind::CrossEntropy: return std::make_unique<CrossEntropy>(p0, spec, quad);
    case LossKind::NelboDiscrete: break;
  }
  throw ArgumentError("make_continuous: not a quadrature loss");
}

std::unique_ptr<Objective> make_objective(const DataTable& p0, const ProcessSpec& spec, const LossSpec& ls) {
  if (ls.kind == LossKind::NelboDiscrete) return std::make_unique<DiscreteNelbo>(p0, spec, ls.param, ls.grid);
  Quadrature q;
  if (ls.quadrature) {
    q = *ls.quadrature;
  } else if (ls.kind == LossKind::CrossEntropy) {
    q = Quadrature::right_endpoint(ls.grid);
  } else {
    q = default_quadrature(ls.kind, spec.schedule, ls.M);
  }
  return make_continuous(p0, spec, ls.kind, q, ls.options);
}

double nelbo_discrete(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, ParamChoice param,
                      const TimeGrid& grid) {
  return DiscreteNelbo(p0, spec, param, grid).value(p, nullptr);
}

double cross_entropy_denoising(const DataTable& p0, const ProcessSpec& spec, const Predictor& p,
                               const Quadrature& quad) {
  return CrossEntropy(p0, spec, quad).value(p, nullptr);
}

double audm_nelbo_continuous(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad,
                             ContinuousOptions opts) {
  return AudmNelbo(p0, spec, quad, opts).value(p, nullptr);
}

double mdm_nelbo_continuous(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad,
                            ContinuousOptions opts) {
  return MdmNelbo(p0, spec, quad, opts).value(p, nullptr);
}

double maxcoupling_nelbo(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad,
                         ContinuousOptions opts) {
  return MaxCouplingNelbo(p0, spec, quad, opts).value(p, nullptr);
}

double ctmc_elbo(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad) {
  return CtmcElbo(p0, spec, quad).value(p, nullptr);
}

double linear_bridge_ct_elbo(const DataTable& p0, const ProcessSpec& spec, const Predictor& p,
                             const Quadrature& quad) {
  return LinearBridgeElbo(p0, spec, quad).value(p, nullptr);
}

LossReport evaluate_report(const DataTable& p0, const ProcessSpec& spec, const LossSpec& ls, const Predictor& p) {
  auto obj = make_objective(p0, spec, ls);
  LossReport r;
  r.loss_name = obj->name();
  r.value = obj->value(p, nullptr);
  r.descriptor = obj->descriptor();
  r.predictor_id = p.id();
  double t_hi = 1.0;
  if (ls.kind == LossKind::NelboDiscrete) {
    t_hi = ls.grid.t(ls.grid.n());
  } else if (ls.kind != LossKind::CrossEntropy) {
    t_hi = ls.quadrature ? ls.quadrature->nodes.back() : default_quadrature(ls.kind, spec.schedule, ls.M).nodes.back();
  }
  r.prior_kl = ls.kind == LossKind::CrossEntropy ? 0.0 : prior_kl(p0, spec, t_hi);
  return r;
}

}  // namespace revdiff
