#include "revdiff/predict.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace revdiff {
namespace {

Row reweight(std::span<const double> mu, std::span<const double> w) {
  Row r(mu.size());
  double z = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    r[k] = mu[k] * w[k];
    z += r[k];
  }
  if (!(z >= 1e-300)) throw NumericError("conversion: normalizer below 1e-300");
  for (auto& v : r) v /= z;
  return r;
}

Row reweight_vjp(std::span<const double> mu, std::span<const double> w, std::span<const double> g) {
  double z = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) z += mu[k] * w[k];
  double dot = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) dot += mu[k] * w[k] / z * g[k];
  Row out(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) out[k] = w[k] * (g[k] - dot) / z;
  return out;
}

}  // namespace

std::string representation_name(Representation r) {
  switch (r) {
    case Representation::Denoiser: return "denoiser";
    case Representation::LeaveOneOut: return "loo";
    case Representation::Score: return "score";
  }
  return "?";
}

Representation parse_representation(const std::string& s) {
  if (s == "denoiser") return Representation::Denoiser;
  if (s == "loo" || s == "leave_one_out") return Representation::LeaveOneOut;
  if (s == "score") return Representation::Score;
  throw ConfigError("unknown representation: " + s);
}

int row_width(const ProcessSpec& spec, Representation r) {
  return r == Representation::Score ? spec.vocab() : spec.K;
}

std::vector<double> Predictor::joint_posterior(State, double, std::optional<State>) const {
  throw ArgumentError("predictor " + id() + " has no joint posterior");
}

// ---------------------------------------------------------------- oracle

OraclePredictor::OraclePredictor(DataTable p0, ProcessSpec spec, Representation rep, bool joint)
    : p0_(std::move(p0)), spec_(spec), rep_(rep), joint_(joint) {
  if (p0_.K != spec_.K || p0_.L != spec_.L) throw DomainError("oracle: p0 does not match spec");
  spec_.validate();
  if (spec_.family == Family::AUDM && rep_ != Representation::Denoiser)
    throw UnsupportedConversionError("oracle: AUDM predictors are denoisers");
}

PredictionGrid OraclePredictor::predict(State xt, double t, std::optional<State> aux) const {
  if (spec_.family == Family::AUDM) {
    if (!aux) throw ArgumentError("AUDM predictor requires the absorbing state u");
    return audm_denoiser_exact(p0_, spec_, xt, *aux, t);
  }
  switch (rep_) {
    case Representation::Denoiser: return denoiser_exact(p0_, spec_, xt, t);
    case Representation::LeaveOneOut: return loo_exact(p0_, spec_, xt, t);
    case Representation::Score: return score_exact(p0_, spec_, xt, t);
  }
  return {};
}

std::vector<double> OraclePredictor::joint_posterior(State xt, double t, std::optional<State> aux) const {
  if (spec_.family == Family::AUDM) {
    if (!aux) throw ArgumentError("AUDM predictor requires the absorbing state u");
    return audm_joint_posterior(p0_, spec_, xt, *aux, t);
  }
  return revdiff::joint_posterior(p0_, spec_, xt, t);
}

std::string OraclePredictor::id() const {
  return "oracle/" + representation_name(rep_) + "/" + family_name(spec_.family) + (joint_ ? "/joint" : "");
}

// ---------------------------------------------------------------- table

TablePredictor::TablePredictor(ProcessSpec spec, Representation rep, std::vector<double> bins)
    : spec_(spec), rep_(rep), bins_(std::move(bins)) {
  spec_.validate();
  if (spec_.family == Family::AUDM) {
    if (rep_ != Representation::Denoiser) throw UnsupportedConversionError("table: AUDM tables are denoisers");
    std::size_t n = spec_.num_clean_states();
    states_ = n * n;
    if (states_ > kLiftedCap) throw CapacityError("table: lifted state space exceeds cap");
  } else {
    states_ = spec_.num_states();
  }
  width_ = row_width(spec_, rep_);
  if (bins_.empty()) throw GridError("table: no time bins");
  for (std::size_t b = 0; b < bins_.size(); ++b) {
    if (!(bins_[b] > 0.0 && bins_[b] <= 1.0)) throw GridError("table: bins must lie in (0, 1]");
    if (b > 0 && !(bins_[b] > bins_[b - 1])) throw GridError("table: bins must be strictly increasing");
  }
  logits_.assign(states_ * bins_.size() * spec_.L * width_, 0.0);
}

TablePredictor::TablePredictor(ProcessSpec spec, Representation rep, std::vector<double> bins,
                               std::vector<double> logits)
    : TablePredictor(spec, rep, std::move(bins)) {
  if (logits.size() != logits_.size()) throw DomainError("table: logits have wrong size");
  for (double v : logits)
    if (!std::isfinite(v)) throw DomainError("table: non-finite logit");
  logits_ = std::move(logits);
}

TablePredictor TablePredictor::random(ProcessSpec spec, Representation rep, std::vector<double> bins,
                                      std::uint64_t seed, double scale) {
  TablePredictor t(spec, rep, std::move(bins));
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.logits_) v = nd(gen);
  return t;
}

std::vector<double> TablePredictor::grid_bins(const TimeGrid& grid) {
  return std::vector<double>(grid.times.begin() + 1, grid.times.end());
}

int TablePredictor::bin_of(double t) const {
  if (!(t >= 0.0 && t <= bins_.back())) throw DomainError("table: time outside the binned range");
  return static_cast<int>(std::lower_bound(bins_.begin(), bins_.end(), t) - bins_.begin());
}

std::size_t TablePredictor::table_state(State xt, std::optional<State> aux) const {
  if (spec_.family == Family::AUDM) {
    if (!aux) throw ArgumentError("AUDM predictor requires the absorbing state u");
    std::size_t n = spec_.num_clean_states();
    if (xt >= n || *aux >= n) throw DomainError("table: state out of range");
    return xt + n * *aux;
  }
  if (xt >= states_) throw DomainError("table: state out of range");
  return xt;
}

bool TablePredictor::fixed_row(State xt, std::optional<State> aux, int l) const {
  if (spec_.family != Family::AUDM) return false;
  Codec c(spec_.K, spec_.L);
  return c.digit(xt, l) != c.digit(*aux, l);
}

PredictionGrid TablePredictor::predict(State xt, double t, std::optional<State> aux) const {
  std::size_t st = table_state(xt, aux);
  int b = bin_of(t);
  Codec c(spec_.vocab(), spec_.L);
  PredictionGrid g(spec_.L, width_);
  for (int l = 0; l < spec_.L; ++l) {
    int x = c.digit(xt, l);
    double* out = g.row(l);
    if (fixed_row(xt, aux, l)) {
      out[x] = 1.0;
      continue;
    }
    const double* z = logits_.data() + offset(st, b, l);
    if (rep_ == Representation::Score) {
      for (int y = 0; y < width_; ++y) out[y] = y == x ? 1.0 : std::exp(z[y]);
    } else {
      Row p = softmax(std::span<const double>(z, width_));
      std::copy(p.begin(), p.end(), out);
    }
  }
  return g;
}

void TablePredictor::backprop_row(State xt, double t, std::optional<State> aux, int l, std::span<const double> grow,
                                  std::vector<double>& grad) const {
  if (fixed_row(xt, aux, l)) return;
  std::size_t off = offset(table_state(xt, aux), bin_of(t), l);
  const double* z = logits_.data() + off;
  if (rep_ == Representation::Score) {
    int x = Codec(spec_.vocab(), spec_.L).digit(xt, l);
    for (int y = 0; y < width_; ++y)
      if (y != x) grad[off + y] += grow[y] * std::exp(z[y]);
    return;
  }
  Row p = softmax(std::span<const double>(z, width_));
  double dot = 0.0;
  for (int k = 0; k < width_; ++k) dot += p[k] * grow[k];
  for (int k = 0; k < width_; ++k) grad[off + k] += p[k] * (grow[k] - dot);
}

std::string TablePredictor::id() const {
  return "table/" + representation_name(rep_) + "/" + family_name(spec_.family) + "/bins=" +
         std::to_string(bins_.size());
}

// ---------------------------------------------------------------- converted

ConvertedPredictor::ConvertedPredictor(PredictorPtr base, Representation to) : base_(std::move(base)), to_(to) {
  if (!base_) throw ArgumentError("converted predictor: null base");
  if (base_->spec().family == Family::AUDM && to_ != base_->representation())
    throw UnsupportedConversionError("AUDM predictors cannot be converted");
}

PredictionGrid ConvertedPredictor::predict(State xt, double t, std::optional<State> aux) const {
  return convert(base_->predict(xt, t, aux), base_->representation(), to_, xt, t, base_->spec());
}

std::string ConvertedPredictor::id() const { return base_->id() + "->" + representation_name(to_); }

// ---------------------------------------------------------------- conversions

RowConversion::RowConversion(const ProcessSpec& spec, Representation from, Representation to, int x, double t)
    : spec_(spec), from_(from), to_(to), x_(x), alpha_(spec.schedule.alpha(t)) {
  if (x < 0 || x >= spec.vocab()) throw DomainError("conversion: token out of range");
  if (spec.family == Family::AUDM && from != to) throw UnsupportedConversionError("AUDM rows cannot be converted");
}

double RowConversion::lik(int k, int y) const {
  if (spec_.family == Family::MDM) return y == spec_.K ? 1.0 - alpha_ : (k == y ? alpha_ : 0.0);
  return (k == y ? alpha_ : 0.0) + (1.0 - alpha_) / spec_.K;
}

Row RowConversion::loo_to_den(std::span<const double> mu) const {
  Row w(spec_.K);
  for (int k = 0; k < spec_.K; ++k) w[k] = lik(k, x_);
  return reweight(mu, w);
}

Row RowConversion::den_to_loo(std::span<const double> d) const {
  if (spec_.family == Family::MDM && x_ != spec_.K)
    throw UnsupportedConversionError("MDM denoiser to LOO is not available on unmasked positions");
  if (alpha_ >= 1.0) throw DomainError("denoiser to LOO is undefined at t = 0");
  Row w(spec_.K);
  for (int k = 0; k < spec_.K; ++k) w[k] = 1.0 / lik(k, x_);
  return reweight(d, w);
}

Row RowConversion::loo_to_score(std::span<const double> mu) const {
  int V = spec_.vocab();
  Row q(V, 0.0);
  for (int y = 0; y < V; ++y)
    for (int k = 0; k < spec_.K; ++k) q[y] += mu[k] * lik(k, y);
  if (!(q[x_] >= 1e-300)) throw NumericError("LOO to score: q(mu -> x) below 1e-300");
  Row r(V);
  for (int y = 0; y < V; ++y) r[y] = y == x_ ? 1.0 : q[y] / q[x_];
  return r;
}

Row RowConversion::den_to_score(std::span<const double> d) const {
  if (spec_.family == Family::MDM && x_ != spec_.K)
    throw UnsupportedConversionError("MDM denoiser to score is not available on unmasked positions");
  if (alpha_ >= 1.0) throw DomainError("denoiser to score is undefined at t = 0");
  int V = spec_.vocab();
  Row r(V, 0.0);
  for (int y = 0; y < V; ++y) {
    if (y == x_) {
      r[y] = 1.0;
      continue;
    }
    for (int k = 0; k < spec_.K; ++k) r[y] += d[k] * lik(k, y) / lik(k, x_);
  }
  return r;
}

Row RowConversion::score_to_loo(std::span<const double> r) const {
  int K = spec_.K;
  Row mu(K);
  if (spec_.family == Family::MDM) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += r[k];
    if (!(s >= 1e-300)) throw NumericError("score to LOO: normalizer below 1e-300");
    for (int k = 0; k < K; ++k) mu[k] = r[k] / s;
    return mu;
  }
  if (alpha_ <= 0.0) throw DomainError("score to LOO is undefined when alpha_t = 0");
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += r[k];
  double c = (1.0 - alpha_) / K;
  for (int k = 0; k < K; ++k) {
    mu[k] = (r[k] / s - c) / alpha_;
    if (mu[k] < 0.0) {
      if (mu[k] < -1e-9) throw NumericError("score to LOO: score row is not a valid ratio row");
      mu[k] = 0.0;
    }
  }
  return mu;
}

Row RowConversion::apply(std::span<const double> in) const {
  using R = Representation;
  if (from_ == to_) return Row(in.begin(), in.end());
  if (from_ == R::LeaveOneOut && to_ == R::Denoiser) return loo_to_den(in);
  if (from_ == R::Denoiser && to_ == R::LeaveOneOut) return den_to_loo(in);
  if (from_ == R::LeaveOneOut && to_ == R::Score) return loo_to_score(in);
  if (from_ == R::Denoiser && to_ == R::Score) return den_to_score(in);
  if (from_ == R::Score && to_ == R::LeaveOneOut) return score_to_loo(in);
  return loo_to_den(score_to_loo(in));
}

Row RowConversion::vjp_loo_to_den(std::span<const double> mu, std::span<const double> g) const {
  Row w(spec_.K);
  for (int k = 0; k < spec_.K; ++k) w[k] = lik(k, x_);
  return reweight_vjp(mu, w, g);
}

Row RowConversion::vjp_den_to_loo(std::span<const double> d, std::span<const double> g) const {
  den_to_loo(d);
  Row w(spec_.K);
  for (int k = 0; k < spec_.K; ++k) w[k] = 1.0 / lik(k, x_);
  return reweight_vjp(d, w, g);
}

Row RowConversion::vjp_loo_to_score(std::span<const double> mu, std::span<const double> g) const {
  Row r = loo_to_score(mu);
  int V = spec_.vocab();
  double qx = 0.0;
  for (int k = 0; k < spec_.K; ++k) qx += mu[k] * lik(k, x_);
  Row out(spec_.K, 0.0);
  for (int k = 0; k < spec_.K; ++k)
    for (int y = 0; y < V; ++y)
      if (y != x_) out[k] += g[y] * (lik(k, y) - r[y] * lik(k, x_)) / qx;
  return out;
}

Row RowConversion::vjp_den_to_score(std::span<const double> d, std::span<const double> g) const {
  den_to_score(d);
  int V = spec_.vocab();
  Row out(spec_.K, 0.0);
  for (int k = 0; k < spec_.K; ++k)
    for (int y = 0; y < V; ++y)
      if (y != x_) out[k] += g[y] * lik(k, y) / lik(k, x_);
  return out;
}

Row RowConversion::vjp_score_to_loo(std::span<const double> r, std::span<const double> g) const {
  int K = spec_.K;
  Row out(spec_.vocab(), 0.0);
  double s = 0.0;
  for (int k = 0; k < K; ++k) s += r[k];
  double dot = 0.0;
  for (int k = 0; k < K; ++k) dot += g[k] * r[k] / s;
  double scale = spec_.family == Family::MDM ? s : alpha_ * s;
  for (int z = 0; z < K; ++z)
    if (z != x_) out[z] = (g[z] - dot) / scale;
  return out;
}

Row RowConversion::vjp(std::span<const double> in, std::span<const double> g) const {
  using R = Representation;
  if (from_ == to_) return Row(g.begin(), g.end());
  if (from_ == R::LeaveOneOut && to_ == R::Denoiser) return vjp_loo_to_den(in, g);
  if (from_ == R::Denoiser && to_ == R::LeaveOneOut) return vjp_den_to_loo(in, g);
  if (from_ == R::LeaveOneOut && to_ == R::Score) return vjp_loo_to_score(in, g);
  if (from_ == R::Denoiser && to_ == R::Score) return vjp_den_to_score(in, g);
  if (from_ == R::Score && to_ == R::LeaveOneOut) return vjp_score_to_loo(in, g);
  Row mu = score_to_loo(in);
  return vjp_score_to_loo(in, vjp_loo_to_den(mu, g));
}

PredictionGrid convert(const PredictionGrid& grid, Representation from, Representation to, State xt, double t,
                       const ProcessSpec& spec) {
  if (grid.C != row_width(spec, from) || grid.L != spec.L) throw DomainError("convert: grid has wrong shape");
  if (from == to) return grid;
  Codec c(spec.vocab(), spec.L);
  PredictionGrid out(spec.L, row_width(spec, to));
  for (int l = 0; l < spec.L; ++l) {
    Row r = RowConversion(spec, from, to, c.digit(xt, l), t).apply(grid.span(l));
    std::copy(r.begin(), r.end(), out.row(l));
  }
  return out;
}

Row loo_logit_shift(std::span<const double> logits, int xt_token, double t, int K, const NoiseSchedule& sched) {
  if (xt_token < 0 || xt_token >= static_cast<int>(logits.size())) throw DomainError("logit shift: token out of range");
  double a = sched.alpha(t);
  if (a >= 1.0) throw DomainError("logit shift is infinite at t = 0");
  Row out(logits.begin(), logits.end());
  out[xt_token] += std::log1p(K * a / (1.0 - a));
  return out;
}

double loo_sensitivity(const Predictor& p, State xt, int l, double t) {
  const auto& spec = p.spec();
  if (p.representation() != Representation::LeaveOneOut) throw ArgumentError("loo_sensitivity: predictor is not LOO");
  if (spec.family != Family::UDM) throw ArgumentError("loo_sensitivity: UDM only");
  if (l < 0 || l >= spec.L) throw DomainError("loo_sensitivity: position out of range");
  Codec c(spec.K, spec.L);
  PredictionGrid base = p.predict(xt, t);
  double worst = 0.0;
  for (int y = 0; y < spec.K; ++y) {
    PredictionGrid g = p.predict(c.with_digit(xt, l, y), t);
    double tv = 0.0;
    for (int k = 0; k < spec.K; ++k) tv += std::abs(g.at(l, k) - base.at(l, k));
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

}  // namespace revdiff
