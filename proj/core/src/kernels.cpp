#include "revdiff/kernels.hpp"

#include <cmath>

namespace revdiff {
namespace {

void check_times(double s, double t) {
  if (!(s >= 0.0 && t <= 1.0)) throw DomainError("times outside [0,1]");
  if (s > t) throw OrderingError("require s <= t");
}

Row padded(const ProcessSpec& spec, std::span<const double> row) {
  int V = spec.vocab();
  if (static_cast<int>(row.size()) == V) return Row(row.begin(), row.end());
  if (static_cast<int>(row.size()) != spec.K) throw DomainError("row has wrong length");
  Row r(V, 0.0);
  for (int k = 0; k < spec.K; ++k) r[k] = row[k];
  return r;
}

Row dirac(int V, int k) {
  Row r(V, 0.0);
  r[k] = 1.0;
  return r;
}

Row udm_canonical(const NoiseSchedule& sc, int K, std::span<const double> mu, int k, double s, double t) {
  double as = sc.alpha(s), at = sc.alpha(t), ats = sc.alpha_ratio(s, t);
  double D = (1.0 - ats) * (1.0 - as);
  double den = K * at * mu[k] + 1.0 - at;
  Row r(K);
  for (int j = 0; j < K; ++j) r[j] = ((as - at) * mu[j] + D / K) / den;
  r[k] += (K * at * mu[k] + (ats - at)) / den;
  return r;
}

Row udm_barycentric(const NoiseSchedule& sc, int K, std::span<const double> mu, int k, double s, double t) {
  double as = sc.alpha(s), at = sc.alpha(t), ats = sc.alpha_ratio(s, t);
  double D = (1.0 - ats) * (1.0 - as);
  double g0 = D / (1.0 + (K - 1) * at);
  double g1 = (ats - at) / (1.0 - at);
  double g2 = (as - at) / (1.0 - at);
  double g3 = D / (1.0 - at);
  Row r(K);
  double flat = (g3 + (g0 - g3) * mu[k]) / K;
  for (int j = 0; j < K; ++j) r[j] = g2 * mu[j] + flat;
  r[k] += g1 + (g3 - g0) * mu[k];
  return r;
}

Row mdm_completion(const NoiseSchedule& sc, int K, std::span<const double> mu, int xt, double s, double t) {
  if (xt != K) return dirac(K + 1, xt);
  double as = sc.alpha(s), at = sc.alpha(t);
  double c1 = (as - at) / (1.0 - at), c2 = (1.0 - as) / (1.0 - at);
  Row r(K + 1, 0.0);
  for (int j = 0; j < K; ++j) r[j] = c1 * mu[j];
  r[K] = c2;
  return r;
}

}  // namespace

Row forward_kernel(const ProcessSpec& spec, std::span<const double> row, double s, double t) {
  check_times(s, t);
  Row x = padded(spec, row);
  check_simplex(x);
  if (s == t) return x;
  double a = spec.schedule.alpha_ratio(s, t);
  Row pi = spec.reference();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * x[i] + (1.0 - a) * pi[i];
  return x;
}

Row forward_kernel(const ProcessSpec& spec, int x0, double s, double t) {
  if (x0 < 0 || x0 >= spec.vocab()) throw DomainError("forward_kernel: token out of range");
  return forward_kernel(spec, dirac(spec.vocab(), x0), s, t);
}

Row bridge(const ProcessSpec& spec, BridgeExtension ext, std::span<const double> row, int xt, double s, double t) {
  check_times(s, t);
  int K = spec.K, V = spec.vocab();
  if (xt < 0 || xt >= V) throw DomainError("bridge: token out of range");
  Row mu = padded(spec, row);
  check_simplex(mu);
  if (spec.family == Family::MDM && mu[K] != 0.0) throw DomainError("bridge: clean row carries mask mass");
  if (s == t) return dirac(V, xt);
  switch (spec.family) {
    case Family::UDM:
      return ext == BridgeExtension::Canonical ? udm_canonical(spec.schedule, K, mu, xt, s, t)
                                               : udm_barycentric(spec.schedule, K, mu, xt, s, t);
    case Family::MDM:
      return mdm_completion(spec.schedule, K, mu, xt, s, t);
    case Family::MaxCoupling:
      return maxcoupling_bridge(spec.schedule, K, std::span<const double>(mu), xt, s, t);
    case Family::AUDM:
      throw ArgumentError("bridge: AUDM requires the absorbing token, use audm_bridge");
  }
  return {};
}

Row bridge_onehot(const ProcessSpec& spec, int x0, int xt, double s, double t) {
  if (x0 < 0 || x0 >= spec.K) throw DomainError("bridge_onehot: clean token out of range");
  check_times(s, t);
  int K = spec.K, V = spec.vocab();
  if (xt < 0 || xt >= V) throw DomainError("bridge_onehot: token out of range");
  if (s == t) return dirac(V, xt);
  const auto& sc = spec.schedule;
  switch (spec.family) {
    case Family::UDM: {
      double as = sc.alpha(s), at = sc.alpha(t), ats = sc.alpha_ratio(s, t);
      double D = (1.0 - ats) * (1.0 - as);
      Row r(K);
      if (x0 == xt) {
        double g0 = D / (1.0 + (K - 1) * at);
        for (int j = 0; j < K; ++j) r[j] = g0 / K;
        r[xt] += 1.0 - g0;
      } else {
        double g1 = (ats - at) / (1.0 - at), g2 = (as - at) / (1.0 - at), g3 = D / (1.0 - at);
        for (int j = 0; j < K; ++j) r[j] = g3 / K;
        r[x0] += g2;
        r[xt] += g1;
      }
      return r;
    }
    case Family::MDM: {
      if (xt != K && xt != x0) throw SupportError("bridge_onehot: MDM visible token differs from x0");
      return mdm_completion(sc, K, dirac(K, x0), xt, s, t);
    }
    case Family::MaxCoupling:
      return maxcoupling_bridge(sc, K, x0, xt, s, t);
    case Family::AUDM:
      throw ArgumentError("bridge_onehot: AUDM requires the absorbing token");
  }
  return {};
}

Row bridge_bayes(const ProcessSpec& spec, std::span<const double> row, int xt, double s, double t) {
  check_times(s, t);
  int V = spec.vocab();
  Row mu = padded(spec, row);
  Row qs = forward_kernel(spec, mu, 0.0, s);
  Row qt = forward_kernel(spec, mu, 0.0, t);
  if (qt[xt] <= 0.0) throw SupportError("bridge_bayes: q_{t|0}(row -> xt) = 0");
  Row r(V);
  for (int j = 0; j < V; ++j) r[j] = forward_kernel(spec, j, s, t)[xt] * qs[j] / qt[xt];
  return r;
}

Row audm_forward(const NoiseSchedule& sched, int K, int x, int u, double s, double t) {
  check_times(s, t);
  if (x < 0 || x >= K || u < 0 || u >= K) throw DomainError("audm_forward: token out of range");
  double a = sched.alpha_ratio(s, t);
  Row r(K, 0.0);
  r[x] += a;
  r[u] += 1.0 - a;
  return r;
}

Row audm_bridge(const NoiseSchedule& sched, int K, std::span<const double> row, int xt, int u, double s, double t) {
  check_times(s, t);
  if (static_cast<int>(row.size()) != K) throw DomainError("audm_bridge: row has wrong length");
  check_simplex(row);
  if (xt < 0 || xt >= K || u < 0 || u >= K) throw DomainError("audm_bridge: token out of range");
  if (xt != u || s == t) return dirac(K, xt);
  double as = sched.alpha(s), at = sched.alpha(t);
  double c1 = (as - at) / (1.0 - at), c2 = (1.0 - as) / (1.0 - at);
  Row r(K);
  for (int j = 0; j < K; ++j) r[j] = c1 * row[j];
  r[u] += c2;
  return r;
}

Row maxcoupling_bridge(const NoiseSchedule& sched, int K, int x0, int xt, double s, double t) {
  if (x0 < 0 || x0 >= K) throw DomainError("maxcoupling_bridge: token out of range");
  return maxcoupling_bridge(sched, K, dirac(K, x0), xt, s, t);
}

Row maxcoupling_bridge(const NoiseSchedule& sched, int K, std::span<const double> row, int xt, double s, double t) {
  check_times(s, t);
  if (static_cast<int>(row.size()) != K) throw DomainError("maxcoupling_bridge: row has wrong length");
  if (xt < 0 || xt >= K) throw DomainError("maxcoupling_bridge: token out of range");
  if (s == t) return dirac(K, xt);
  double as = sched.alpha(s), at = sched.alpha(t);
  double c1 = (as - at) / (1.0 - at), c2 = (1.0 - as) / (1.0 - at);
  Row r(K);
  for (int j = 0; j < K; ++j) r[j] = c1 * row[j];
  r[xt] += c2;
  return r;
}

std::vector<double> maxcoupling_joint(const NoiseSchedule& sched, int K, int x0, double s, double t) {
  ProcessSpec spec{K, 1, Family::MaxCoupling, sched};
  Row qt = forward_kernel(spec, x0, 0.0, t);
  std::vector<double> j(static_cast<std::size_t>(K) * K, 0.0);
  for (int xt = 0; xt < K; ++xt) {
    Row b = maxcoupling_bridge(sched, K, x0, xt, s, t);
    for (int xs = 0; xs < K; ++xs) j[xs * K + xt] = b[xs] * qt[xt];
  }
  return j;
}

Row noise_resample(const NoiseSchedule& sched, int K, int x0, int xs, double s) {
  if (x0 < 0 || x0 >= K || xs < 0 || xs >= K) throw DomainError("noise_resample: token out of range");
  if (xs != x0) return dirac(K, xs);
  double as = sched.alpha(s);
  double den = 1.0 + (K - 1) * as;
  Row r(K, as / den);
  r[x0] = 1.0 / den;
  return r;
}

Row tau_resample_pmf(const NoiseSchedule& sched, int K, int x0, int xs, int s_index, const TimeGrid& grid) {
  if (s_index < 0 || s_index > grid.n()) throw GridError("tau_resample_pmf: s is not a grid point");
  if (x0 < 0 || x0 >= K || xs < 0 || xs >= K) throw DomainError("tau_resample_pmf: token out of range");
  int n = grid.n();
  double as = sched.alpha(grid.t(s_index));
  Row r(n + 1, 0.0);
  if (xs != x0) {
    for (int c = 0; c < s_index; ++c) r[c] = (sched.alpha(grid.t(c)) - sched.alpha(grid.t(c + 1))) / (1.0 - as);
  } else {
    double den = 1.0 + (K - 1) * as;
    for (int c = 0; c < s_index; ++c) r[c] = (sched.alpha(grid.t(c)) - sched.alpha(grid.t(c + 1))) / den;
    r[n] = K * as / den;
  }
  return r;
}

}  // namespace revdiff
