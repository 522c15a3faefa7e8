#include "revdiff/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace revdiff {
namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ProcessSpec udm_of(const ProcessSpec& spec) {
  ProcessSpec u = spec;
  u.family = Family::UDM;
  return u;
}

double draw(RngKey key, int step, int sweep, int pos) {
  return CounterRng(key.seed, key.sample, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(sweep),
                    static_cast<std::uint64_t>(pos))
      .uniform();
}

int uniform_token(double u, int K) { return std::min(K - 1, static_cast<int>(u * K)); }

void expand_product(const std::vector<Row>& rows, const Codec& c, double w, std::vector<std::pair<State, double>>& out) {
  std::vector<std::pair<State, double>> cur{{0, w}}, next;
  for (int l = 0; l < static_cast<int>(rows.size()); ++l) {
    next.clear();
    for (auto [s, p] : cur)
      for (int j = 0; j < static_cast<int>(rows[l].size()); ++j)
        if (rows[l][j] != 0.0) next.emplace_back(s + static_cast<State>(j) * c.stride(l), p * rows[l][j]);
    cur.swap(next);
  }
  out.insert(out.end(), cur.begin(), cur.end());
}

Row dirac_row(int V, int k) {
  Row r(V, 0.0);
  r[k] = 1.0;
  return r;
}

void require_family(const Predictor& p, std::initializer_list<Family> ok, const char* who) {
  for (auto f : ok)
    if (p.spec().family == f) return;
  throw ArgumentError(std::string(who) + ": predictor family " + family_name(p.spec().family) + " not supported");
}

// Denoiser rows of an MDM predictor at a masked view.
PredictionGrid mdm_rows(const Predictor& p, State view, double t) {
  PredictionGrid g = p.predict(view, t);
  if (p.representation() == Representation::Score)
    g = convert(g, Representation::Score, Representation::LeaveOneOut, view, t, p.spec());
  return g;
}

// Joint X0 posterior used by the lifted samplers: the predictor's joint law or the product of its rows.
std::vector<double> x0_law(const Predictor& p, State query, std::optional<State> aux, double t,
                           const std::function<bool(int)>& visible, State x) {
  const auto& spec = p.spec();
  int K = spec.K, L = spec.L;
  Codec c(K, L);
  if (p.has_joint()) return p.joint_posterior(query, t, aux);
  PredictionGrid g = spec.family == Family::MDM ? mdm_rows(p, query, t) : p.predict(query, t, aux);
  std::vector<Row> rows(L);
  for (int l = 0; l < L; ++l)
    rows[l] = visible(l) ? dirac_row(K, c.digit(x, l)) : Row(g.row(l), g.row(l) + K);
  std::vector<std::pair<State, double>> items;
  expand_product(rows, c, 1.0, items);
  std::vector<double> out(c.size(), 0.0);
  for (auto [s, v] : items) out[s] += v;
  return out;
}

std::vector<double> mudm_initial(const ProcessSpec& spec, const TimeGrid& grid) {
  int K = spec.K, L = spec.L, n = grid.n();
  const auto& sc = spec.schedule;
  double tail = sc.alpha(grid.t(n));
  if (tail != 0.0) throw GridError("MUDM sampler requires alpha(t_n) = 0");
  Codec cx(K, L), cc(n + 1, L);
  std::vector<double> mass(n + 1, 0.0);
  for (int c = 0; c < n; ++c) mass[c] = sc.alpha(grid.t(c)) - sc.alpha(grid.t(c + 1));
  std::vector<double> law(cx.size() * cc.size(), 0.0);
  for (State cells = 0; cells < cc.size(); ++cells) {
    double w = 1.0;
    for (int l = 0; l < L; ++l) w *= mass[cc.digit(cells, l)];
    if (w == 0.0) continue;
    for (State x = 0; x < cx.size(); ++x) law[x + cx.size() * cells] = w / static_cast<double>(cx.size());
  }
  return law;
}

std::vector<double> audm_initial(const ProcessSpec& spec) {
  std::size_t N = spec.num_clean_states();
  std::vector<double> law(N * N, 0.0);
  for (State u = 0; u < N; ++u) law[u + N * u] = 1.0 / static_cast<double>(N);
  return law;
}

}  // namespace

// ---------------------------------------------------------------- modifiers

void Modifier::validate() const {
  if (kind == ModifierKind::Temperature && !(value > 0.0)) throw ConfigError("temperature must be positive");
  if (kind == ModifierKind::TopP && !(value > 0.0 && value <= 1.0)) throw ConfigError("top-p must lie in (0, 1]");
  if (kind != ModifierKind::None && applied_to == Representation::Score)
    throw ArgumentError("modifiers apply to normalized rows, not scores");
}

std::string modifier_kind_name(ModifierKind k) {
  switch (k) {
    case ModifierKind::None: return "none";
    case ModifierKind::Temperature: return "temperature";
    case ModifierKind::TopP: return "top_p";
  }
  return "?";
}

ModifierKind parse_modifier_kind(const std::string& s) {
  if (s == "none") return ModifierKind::None;
  if (s == "temperature") return ModifierKind::Temperature;
  if (s == "top_p" || s == "topp") return ModifierKind::TopP;
  throw ConfigError("unknown modifier: " + s);
}

Row apply_modifier(const Modifier& m, std::span<const double> row) {
  m.validate();
  Row in(row.begin(), row.end());
  if (m.kind == ModifierKind::None) return in;
  if (m.kind == ModifierKind::Temperature) {
    if (m.value == 1.0) return in;
    Row lg(in.size());
    for (std::size_t i = 0; i < in.size(); ++i)
      lg[i] = in[i] > 0.0 ? std::log(in[i]) / m.value : -std::numeric_limits<double>::infinity();
    return softmax(lg);
  }
  if (m.value == 1.0) return in;
  std::vector<std::size_t> idx(in.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return in[a] > in[b]; });
  double cum = 0.0, cut = 0.0;
  for (std::size_t i : idx) {
    cum += in[i];
    cut = in[i];
    if (cum >= m.value) break;
  }
  Row out(in.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (in[i] >= cut && in[i] > 0.0) {
      out[i] = in[i];
      z += in[i];
    }
  for (auto& v : out) v /= z;
  return out;
}

void PCConfig::validate(int L) const {
  if (M < 0) throw ConfigError("pc: M must be >= 0");
  if (k < 1 || k > L) throw ConfigError("pc: k must lie in [1, L]");
}

// ---------------------------------------------------------------- rng

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t sample, std::uint64_t step, std::uint64_t sweep,
                       std::uint64_t position) {
  std::uint64_t h = splitmix64(seed ^ 0x5bd1e9955bd1e995ULL);
  h = splitmix64(h ^ sample);
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ sweep);
  key_ = splitmix64(h ^ position);
}

CounterRng::result_type CounterRng::operator()() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

double CounterRng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

int sample_categorical(std::span<const double> p, double u) {
  double total = 0.0;
  int last = -1;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) {
      total += p[j];
      last = static_cast<int>(j);
    }
  if (last < 0) throw DomainError("sample_categorical: no positive mass");
  double target = u * total, cum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;
    cum += p[j];
    if (target < cum) return static_cast<int>(j);
  }
  return last;
}

double margin_score(std::span<const double> cond, int current) {
  if (current < 0 || current >= static_cast<int>(cond.size())) throw DomainError("margin_score: token out of range");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < cond.size(); ++y)
    if (static_cast<int>(y) != current) best = std::max(best, std::log(cond[y]));
  return std::log(cond[current]) - best;
}

// ---------------------------------------------------------------- kernel pieces

std::vector<Row> ancestral_rows(const Predictor& p, ParamChoice param, const Modifier& mod, State x, double s,
                                double t) {
  const auto& spec = p.spec();
  mod.validate();
  PredictionGrid G = p.predict(x, t);
  Codec c(spec.vocab(), spec.L);
  Representation src = p.representation();
  StepRule base(spec, param, src, s, t);
  std::optional<StepRule> modified;
  if (mod.kind != ModifierKind::None) modified.emplace(spec, param, mod.applied_to, s, t);
  std::vector<Row> rows(spec.L);
  for (int l = 0; l < spec.L; ++l) {
    int xl = c.digit(x, l);
    bool visible_mdm = spec.family == Family::MDM && xl != spec.mask();
    if (!modified || visible_mdm) {
      rows[l] = base.row(G.span(l), xl);
      continue;
    }
    Row r = RowConversion(spec, src, mod.applied_to, xl, t).apply(G.span(l));
    rows[l] = modified->row(apply_modifier(mod, r), xl);
  }
  return rows;
}

std::vector<Row> corrector_conditionals(const Predictor& p, State x, double s) {
  const auto& spec = p.spec();
  if (spec.family != Family::UDM) throw ArgumentError("corrector: UDM only");
  PredictionGrid G = p.predict(x, s);
  if (p.representation() != Representation::LeaveOneOut)
    G = convert(G, p.representation(), Representation::LeaveOneOut, x, s, spec);
  double a = spec.schedule.alpha(s);
  std::vector<Row> out(spec.L, Row(spec.K));
  for (int l = 0; l < spec.L; ++l)
    for (int k = 0; k < spec.K; ++k) out[l][k] = a * G.at(l, k) + (1.0 - a) / spec.K;
  return out;
}

std::vector<int> corrector_positions(const std::vector<Row>& cond, State x, int K, int L, int k) {
  Codec c(K, L);
  std::vector<std::pair<double, int>> m(L);
  for (int l = 0; l < L; ++l) m[l] = {margin_score(cond[l], c.digit(x, l)), l};
  std::stable_sort(m.begin(), m.end(), [](auto& a, auto& b) { return a.first < b.first; });
  std::vector<int> out;
  for (int i = 0; i < k && i < L; ++i) out.push_back(m[i].second);
  return out;
}

PredictionGrid ctmc_rates(const Predictor& score, State x, double t) {
  const auto& spec = score.spec();
  if (spec.family != Family::UDM) throw ArgumentError("ctmc: UDM only");
  PredictionGrid G = score.predict(x, t);
  if (score.representation() != Representation::Score)
    G = convert(G, score.representation(), Representation::Score, x, t, spec);
  double b = spec.schedule.beta(t) / spec.K;
  Codec c(spec.K, spec.L);
  PredictionGrid R(spec.L, spec.K);
  for (int l = 0; l < spec.L; ++l)
    for (int y = 0; y < spec.K; ++y)
      if (y != c.digit(x, l)) R.at(l, y) = b * G.at(l, y);
  return R;
}

std::vector<double> push_law(const std::vector<double>& law, const SparseKernel& kernel) {
  std::vector<double> out(law.size(), 0.0);
  std::vector<std::pair<State, double>> items;
  for (State x = 0; x < law.size(); ++x) {
    if (law[x] == 0.0) continue;
    items.clear();
    kernel(x, items);
    for (auto [y, p] : items) out[y] += law[x] * p;
  }
  return out;
}

std::vector<double> gibbs_pushforward(const std::vector<double>& law, const ProcessSpec& spec,
                                      const std::function<Row(State)>& conditional, int l) {
  Codec c(spec.vocab(), spec.L);
  return push_law(law, [&](State x, std::vector<std::pair<State, double>>& out) {
    Row r = conditional(x);
    for (int y = 0; y < spec.vocab(); ++y)
      if (r[y] != 0.0) out.emplace_back(c.with_digit(x, l, y), r[y]);
  });
}

// ---------------------------------------------------------------- samplers

namespace {

State initial_noise(const ProcessSpec& spec, int n, RngKey key) {
  Codec c(spec.vocab(), spec.L);
  State x = 0;
  for (int l = 0; l < spec.L; ++l) {
    int tok = spec.family == Family::MDM ? spec.mask() : uniform_token(draw(key, n + 1, 0, l), spec.K);
    x += static_cast<State>(tok) * c.stride(l);
  }
  return x;
}

State draw_rows(const std::vector<Row>& rows, const Codec& c, RngKey key, int step, int sweep) {
  State x = 0;
  for (int l = 0; l < static_cast<int>(rows.size()); ++l)
    x += static_cast<State>(sample_categorical(rows[l], draw(key, step, sweep, l))) * c.stride(l);
  return x;
}

void check_grid(const TimeGrid& grid) {
  if (grid.times.size() < 2) throw GridError("sampler: grid needs at least two points");
}

}  // namespace

State ancestral_sample(const Predictor& p, ParamChoice param, const TimeGrid& grid, const Modifier& mod, RngKey key,
                       std::vector<State>* trajectory) {
  return pc_sample(p, param, grid, PCConfig{0, 1, false}, mod, key, trajectory);
}

State pc_sample(const Predictor& p, ParamChoice param, const TimeGrid& grid, const PCConfig& pc, const Modifier& mod,
                RngKey key, std::vector<State>* trajectory) {
  check_grid(grid);
  require_family(p, {Family::UDM, Family::MDM, Family::MaxCoupling}, "ancestral");
  const auto& spec = p.spec();
  pc.validate(spec.L);
  if (pc.M > 0 && spec.family != Family::UDM) throw ArgumentError("pc_sample: UDM only");
  int n = grid.n();
  Codec c(spec.vocab(), spec.L);
  State x = initial_noise(spec, n, key);
  if (trajectory) trajectory->assign(1, x);
  for (int i = n; i >= 1; --i) {
    double s = grid.t(i - 1), t = grid.t(i);
    x = draw_rows(ancestral_rows(p, param, mod, x, s, t), c, key, i, 0);
    if (pc.M > 0 && (s > 0.0 || pc.at_zero)) {
      for (int m = 1; m <= pc.M; ++m) {
        auto cond = corrector_conditionals(p, x, s);
        State nx = x;
        for (int l : corrector_positions(cond, x, spec.K, spec.L, pc.k))
          nx = c.with_digit(nx, l, sample_categorical(cond[l], draw(key, i, m, l)));
        x = nx;
      }
    }
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

State audm_sample(const Predictor& p, const TimeGrid& grid, RngKey key, std::vector<State>* trajectory) {
  check_grid(grid);
  require_family(p, {Family::AUDM}, "audm_sample");
  const auto& spec = p.spec();
  int n = grid.n(), K = spec.K;
  Codec c(K, spec.L);
  State u = initial_noise(udm_of(spec), n, key);
  State x = u;
  if (trajectory) trajectory->assign(1, x);
  for (int i = n; i >= 1; --i) {
    double s = grid.t(i - 1), t = grid.t(i);
    PredictionGrid G = p.predict(x, t, u);
    State nx = x;
    for (int l = 0; l < spec.L; ++l) {
      int xl = c.digit(x, l), ul = c.digit(u, l);
      if (xl != ul) continue;
      Row r = audm_bridge(spec.schedule, K, G.span(l), xl, ul, s, t);
      nx = c.with_digit(nx, l, sample_categorical(r, draw(key, i, 0, l)));
    }
    x = nx;
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

State reaudm_sample(const Predictor& p, const TimeGrid& grid, RngKey key, std::vector<State>* trajectory) {
  check_grid(grid);
  require_family(p, {Family::AUDM}, "reaudm_sample");
  const auto& spec = p.spec();
  ProcessSpec udm = udm_of(spec);
  int n = grid.n(), K = spec.K, L = spec.L;
  Codec c(K, L);
  State u = initial_noise(udm, n, key);
  State x = u;
  if (trajectory) trajectory->assign(1, x);
  for (int i = n; i >= 1; --i) {
    double s = grid.t(i - 1), t = grid.t(i);
    State x0 = 0;
    if (p.has_joint()) {
      x0 = static_cast<State>(sample_categorical(p.joint_posterior(x, t, u), draw(key, i, 1, L)));
    } else {
      PredictionGrid G = p.predict(x, t, u);
      for (int l = 0; l < L; ++l)
        x0 += static_cast<State>(sample_categorical(G.span(l), draw(key, i, 1, l))) * c.stride(l);
    }
    State xs = 0, us = 0;
    for (int l = 0; l < L; ++l) {
      int a = c.digit(x0, l);
      int b = sample_categorical(bridge_onehot(udm, a, c.digit(x, l), s, t), draw(key, i, 2, l));
      int v = sample_categorical(noise_resample(spec.schedule, K, a, b, s), draw(key, i, 3, l));
      xs += static_cast<State>(b) * c.stride(l);
      us += static_cast<State>(v) * c.stride(l);
    }
    x = xs;
    u = us;
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

State mudm_sample(const Predictor& p, const TimeGrid& grid, RngKey key, std::vector<State>* trajectory) {
  check_grid(grid);
  require_family(p, {Family::MDM}, "mudm_sample");
  const auto& spec = p.spec();
  ProcessSpec udm = udm_of(spec);
  const auto& sc = spec.schedule;
  int n = grid.n(), K = spec.K, L = spec.L;
  if (sc.alpha(grid.t(n)) != 0.0) throw GridError("MUDM sampler requires alpha(t_n) = 0");
  Codec c(K, L), cc(n + 1, L);
  std::vector<double> mass(n + 1, 0.0);
  for (int j = 0; j < n; ++j) mass[j] = sc.alpha(grid.t(j)) - sc.alpha(grid.t(j + 1));
  State x = 0, cells = 0;
  for (int l = 0; l < L; ++l) {
    x += static_cast<State>(uniform_token(draw(key, n + 1, 0, l), K)) * c.stride(l);
    cells += static_cast<State>(sample_categorical(mass, draw(key, n + 1, 1, l))) * cc.stride(l);
  }
  if (trajectory) trajectory->assign(1, x);
  for (int i = n; i >= 1; --i) {
    double s = grid.t(i - 1), t = grid.t(i);
    State view = masked_view(x, cells, K, L, n, i);
    auto visible = [&](int l) { return !tau_cell_masked(cc.digit(cells, l), i); };
    State x0 = 0;
    if (p.has_joint()) {
      x0 = static_cast<State>(sample_categorical(p.joint_posterior(view, t), draw(key, i, 1, L)));
    } else {
      PredictionGrid G = mdm_rows(p, view, t);
      for (int l = 0; l < L; ++l) {
        int tok = visible(l) ? c.digit(x, l) : sample_categorical(G.span(l), draw(key, i, 1, l));
        x0 += static_cast<State>(tok) * c.stride(l);
      }
    }
    State xs = 0, ncells = 0;
    for (int l = 0; l < L; ++l) {
      int a = c.digit(x0, l);
      int b = sample_categorical(bridge_onehot(udm, a, c.digit(x, l), s, t), draw(key, i, 2, l));
      int cell = sample_categorical(tau_resample_pmf(sc, K, a, b, i - 1, grid), draw(key, i, 3, l));
      xs += static_cast<State>(b) * c.stride(l);
      ncells += static_cast<State>(cell) * cc.stride(l);
    }
    x = xs;
    cells = ncells;
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

State euler_step(const Predictor& score, State xt, double t, double dt, RngKey key, int step) {
  const auto& spec = score.spec();
  PredictionGrid R = ctmc_rates(score, xt, t);
  double lam = 0.0;
  for (double v : R.v) lam += v;
  if (dt * lam > 1.0) throw StepSizeError("euler_step: dt * total rate exceeds 1");
  double u = draw(key, step, 0, 0), cum = 0.0;
  Codec c(spec.K, spec.L);
  for (int l = 0; l < spec.L; ++l)
    for (int y = 0; y < spec.K; ++y) {
      if (R.at(l, y) == 0.0) continue;
      cum += dt * R.at(l, y);
      if (u < cum) return c.with_digit(xt, l, y);
    }
  return xt;
}

State tau_leap_step(const Predictor& score, State xt, double t, double dt, RngKey key, int step) {
  const auto& spec = score.spec();
  PredictionGrid R = ctmc_rates(score, xt, t);
  Codec c(spec.K, spec.L);
  State x = xt;
  for (int l = 0; l < spec.L; ++l) {
    int total = 0, dest = -1;
    for (int y = 0; y < spec.K; ++y) {
      double mean = dt * R.at(l, y);
      if (mean <= 0.0) continue;
      CounterRng rng(key.seed, key.sample, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(y),
                     static_cast<std::uint64_t>(l));
      std::poisson_distribution<int> pd(mean);
      int k = pd(rng);
      total += k;
      if (k == 1) dest = y;
    }
    if (total == 1) x = c.with_digit(x, l, dest);
  }
  return x;
}

State ctmc_sample(const Predictor& score, const TimeGrid& grid, CtmcScheme scheme, RngKey key,
                  std::vector<State>* trajectory) {
  check_grid(grid);
  require_family(score, {Family::UDM}, "ctmc_sample");
  const auto& spec = score.spec();
  int n = grid.n();
  if (!(spec.schedule.alpha(grid.t(n)) > 0.0)) throw GridError("ctmc_sample: requires alpha(t_n) > 0");
  State x = initial_noise(spec, n, key);
  if (trajectory) trajectory->assign(1, x);
  for (int i = n; i >= 1; --i) {
    double dt = grid.t(i) - grid.t(i - 1);
    x = scheme == CtmcScheme::Euler ? euler_step(score, x, grid.t(i), dt, key, i)
                                    : tau_leap_step(score, x, grid.t(i), dt, key, i);
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

// ---------------------------------------------------------------- dispatch

std::string sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::Ancestral: return "ancestral";
    case SamplerKind::PredictorCorrector: return "pc";
    case SamplerKind::AUDM: return "audm";
    case SamplerKind::ReAUDM: return "reaudm";
    case SamplerKind::MUDM: return "mudm";
    case SamplerKind::Euler: return "euler";
    case SamplerKind::TauLeap: return "tau_leap";
  }
  return "?";
}

SamplerKind parse_sampler(const std::string& s) {
  for (auto k : {SamplerKind::Ancestral, SamplerKind::PredictorCorrector, SamplerKind::AUDM, SamplerKind::ReAUDM,
                 SamplerKind::MUDM, SamplerKind::Euler, SamplerKind::TauLeap})
    if (sampler_name(k) == s) return k;
  throw ConfigError("unknown sampler: " + s);
}

void SamplerSpec::validate() const {
  if (!predictor) throw ConfigError("sampler: no predictor");
  check_grid(grid);
  modifier.validate();
  bool mod_ok = kind == SamplerKind::Ancestral || kind == SamplerKind::PredictorCorrector;
  if (!mod_ok && modifier.kind != ModifierKind::None)
    throw ArgumentError("sampler: modifiers apply to ancestral and predictor-corrector sampling");
  if (kind == SamplerKind::PredictorCorrector) pc.validate(predictor->spec().L);
}

int SamplerSpec::output_radix() const {
  bool own = kind == SamplerKind::Ancestral || kind == SamplerKind::PredictorCorrector;
  return own ? predictor->spec().vocab() : predictor->spec().K;
}

State run_sampler(const SamplerSpec& spec, RngKey key, std::vector<State>* trajectory) {
  const Predictor& p = *spec.predictor;
  switch (spec.kind) {
    case SamplerKind::Ancestral: return ancestral_sample(p, spec.param, spec.grid, spec.modifier, key, trajectory);
    case SamplerKind::PredictorCorrector:
      return pc_sample(p, spec.param, spec.grid, spec.pc, spec.modifier, key, trajectory);
    case SamplerKind::AUDM: return audm_sample(p, spec.grid, key, trajectory);
    case SamplerKind::ReAUDM: return reaudm_sample(p, spec.grid, key, trajectory);
    case SamplerKind::MUDM: return mudm_sample(p, spec.grid, key, trajectory);
    case SamplerKind::Euler: return ctmc_sample(p, spec.grid, CtmcScheme::Euler, key, trajectory);
    case SamplerKind::TauLeap: return ctmc_sample(p, spec.grid, CtmcScheme::TauLeap, key, trajectory);
  }
  return 0;
}

std::vector<State> sample_endpoints(const SamplerSpec& spec, std::size_t N, std::uint64_t seed) {
  spec.validate();
  std::vector<State> out(N);
  parallel_for(N, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = run_sampler(spec, RngKey{seed, i});
  });
  return out;
}

ExactDistribution sampler_law(const SamplerSpec& ss) {
  ss.validate();
  const Predictor& p = *ss.predictor;
  const auto& spec = p.spec();
  const auto& grid = ss.grid;
  int n = grid.n(), K = spec.K, L = spec.L;
  std::string desc = "sampler_law[" + sampler_name(ss.kind) + "," + space_descriptor(spec) + "]";
  switch (ss.kind) {
    case SamplerKind::Ancestral:
    case SamplerKind::PredictorCorrector: {
      require_family(p, {Family::UDM, Family::MDM, Family::MaxCoupling}, "ancestral");
      Codec c(spec.vocab(), L);
      std::vector<double> law(c.size(), 0.0);
      if (spec.family == Family::MDM) {
        law[c.size() - 1] = 1.0;
      } else {
        std::fill(law.begin(), law.end(), 1.0 / static_cast<double>(c.size()));
      }
      int M = ss.kind == SamplerKind::PredictorCorrector ? ss.pc.M : 0;
      for (int i = n; i >= 1; --i) {
        double s = grid.t(i - 1), t = grid.t(i);
        law = push_law(law, [&](State x, auto& out) {
          expand_product(ancestral_rows(p, ss.param, ss.modifier, x, s, t), c, 1.0, out);
        });
        if (M > 0 && (s > 0.0 || ss.pc.at_zero)) {
          for (int m = 1; m <= M; ++m)
            law = push_law(law, [&](State x, auto& out) {
              auto cond = corrector_conditionals(p, x, s);
              std::vector<Row> rows(L);
              for (int l = 0; l < L; ++l) rows[l] = dirac_row(K, c.digit(x, l));
              for (int l : corrector_positions(cond, x, K, L, ss.pc.k)) rows[l] = cond[l];
              expand_product(rows, c, 1.0, out);
            });
        }
      }
      return {desc, law};
    }
    case SamplerKind::AUDM: {
      require_family(p, {Family::AUDM}, "audm");
      Codec c(K, L);
      std::size_t N = c.size();
      auto law = audm_initial(spec);
      for (int i = n; i >= 1; --i) {
        double s = grid.t(i - 1), t = grid.t(i);
        law = push_law(law, [&](State z, auto& out) {
          State x = z % N, u = z / N;
          PredictionGrid G = p.predict(x, t, u);
          std::vector<Row> rows(L);
          for (int l = 0; l < L; ++l) {
            int xl = c.digit(x, l), ul = c.digit(u, l);
            rows[l] = xl != ul ? dirac_row(K, xl) : audm_bridge(spec.schedule, K, G.span(l), xl, ul, s, t);
          }
          std::size_t start = out.size();
          expand_product(rows, c, 1.0, out);
          for (std::size_t j = start; j < out.size(); ++j) out[j].first += N * u;
        });
      }
      std::vector<double> xm(N, 0.0);
      for (State z = 0; z < law.size(); ++z) xm[z % N] += law[z];
      return {desc, xm};
    }
    case SamplerKind::ReAUDM: {
      require_family(p, {Family::AUDM}, "reaudm");
      PosteriorFn fn = [&](State x, State u, int i, std::vector<double>& out) {
        out = x0_law(p, x, u, grid.t(i), [](int) { return false; }, x);
      };
      return {desc, lifted_pushforward(spec, grid, Lifting::ReAUDM, audm_initial(spec), fn)[0].probs};
    }
    case SamplerKind::MUDM: {
      require_family(p, {Family::MDM}, "mudm");
      Codec cc(n + 1, L);
      PosteriorFn fn = [&](State x, State cells, int i, std::vector<double>& out) {
        State view = masked_view(x, cells, K, L, n, i);
        out = x0_law(p, view, std::nullopt, grid.t(i),
                     [&](int l) { return !tau_cell_masked(cc.digit(cells, l), i); }, x);
      };
      return {desc, lifted_pushforward(spec, grid, Lifting::MUDM, mudm_initial(spec, grid), fn)[0].probs};
    }
    case SamplerKind::Euler:
    case SamplerKind::TauLeap: {
      require_family(p, {Family::UDM}, "ctmc");
      if (!(spec.schedule.alpha(grid.t(n)) > 0.0)) throw GridError("ctmc: requires alpha(t_n) > 0");
      Codec c(K, L);
      std::vector<double> law(c.size(), 1.0 / static_cast<double>(c.size()));
      for (int i = n; i >= 1; --i) {
        double t = grid.t(i), dt = grid.t(i) - grid.t(i - 1);
        law = push_law(law, [&](State x, auto& out) {
          PredictionGrid R = ctmc_rates(p, x, t);
          if (ss.kind == SamplerKind::Euler) {
            double lam = 0.0;
            for (double v : R.v) lam += v;
            if (dt * lam > 1.0) throw StepSizeError("euler: dt * total rate exceeds 1");
            out.emplace_back(x, 1.0 - dt * lam);
            for (int l = 0; l < L; ++l)
              for (int y = 0; y < K; ++y)
                if (R.at(l, y) != 0.0) out.emplace_back(c.with_digit(x, l, y), dt * R.at(l, y));
            return;
          }
          std::vector<Row> rows(L, Row(K, 0.0));
          for (int l = 0; l < L; ++l) {
            double mu = 0.0;
            for (int y = 0; y < K; ++y) mu += dt * R.at(l, y);
            double e = std::exp(-mu), moved = 0.0;
            for (int y = 0; y < K; ++y) {
              rows[l][y] = dt * R.at(l, y) * e;
              moved += rows[l][y];
            }
            rows[l][c.digit(x, l)] = 1.0 - moved;
          }
          expand_product(rows, c, 1.0, out);
        });
      }
      return {desc, law};
    }
  }
  return {};
}

}  // namespace revdiff
