#include "revdiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

namespace revdiff {

EmpiricalDistribution EmpiricalDistribution::from_samples(const std::vector<State>& samples, std::size_t space_size) {
  EmpiricalDistribution e;
  e.counts.assign(space_size, 0);
  for (State s : samples) {
    if (s >= space_size) throw DomainError("EmpiricalDistribution: state out of range");
    ++e.counts[s];
  }
  e.N = samples.size();
  return e;
}

std::vector<double> EmpiricalDistribution::probs() const {
  std::vector<double> p(counts.size(), 0.0);
  if (N == 0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = static_cast<double>(counts[i]) / static_cast<double>(N);
  return p;
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("tv_distance: space mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

double tv_distance(const EmpiricalDistribution& emp, const ExactDistribution& exact) {
  auto p = emp.probs();
  return tv_distance(p, exact.probs);
}

ChiSquareResult chi_square_gof(const EmpiricalDistribution& emp, const ExactDistribution& exact) {
  if (emp.counts.size() != exact.probs.size()) throw ArgumentError("chi_square_gof: space mismatch");
  double N = static_cast<double>(emp.N);
  std::vector<std::pair<double, double>> bins;  // (expected, observed)
  double pool_e = 0.0, pool_o = 0.0;
  for (std::size_t i = 0; i < exact.probs.size(); ++i) {
    double e = exact.probs[i] * N, o = static_cast<double>(emp.counts[i]);
    if (e >= 5.0) {
      bins.emplace_back(e, o);
    } else {
      pool_e += e;
      pool_o += o;
    }
  }
  if (pool_e > 0.0 || pool_o > 0.0) {
    if (pool_e < 5.0 && !bins.empty()) {
      auto it = std::min_element(bins.begin(), bins.end());
      it->first += pool_e;
      it->second += pool_o;
    } else {
      bins.emplace_back(pool_e, pool_o);
    }
  }
  double total_e = 0.0;
  for (auto& b : bins) total_e += b.first;
  if (!(total_e > 0.0)) throw DomainError("chi_square_gof: all expected counts are zero");
  ChiSquareResult r;
  for (auto [e, o] : bins) {
    if (e == 0.0) {
      if (o > 0.0) r.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    r.statistic += (o - e) * (o - e) / e;
  }
  r.bins = static_cast<int>(bins.size());
  r.dof = std::max(1, r.bins - 1);
  return r;
}

double chi_square_quantile(int dof, double q) {
  if (dof < 1 || !(q > 0.0 && q < 1.0)) throw DomainError("chi_square_quantile: invalid arguments");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), q);
}

double tv_standard_error(const std::vector<double>& law, std::uint64_t N, int B, std::uint64_t seed) {
  if (B < 1 || N == 0) throw DomainError("tv_standard_error: B and N must be positive");
  std::mt19937_64 rng(seed);
  double acc = 0.0;
  std::vector<double> emp(law.size());
  for (int b = 0; b < B; ++b) {
    std::uint64_t left = N;
    double rest = 1.0;
    for (std::size_t i = 0; i < law.size(); ++i) {
      std::uint64_t c = 0;
      if (left > 0 && law[i] > 0.0) {
        double q = std::clamp(law[i] / rest, 0.0, 1.0);
        c = i + 1 == law.size() ? left : std::binomial_distribution<std::uint64_t>(left, q)(rng);
      }
      emp[i] = static_cast<double>(c) / static_cast<double>(N);
      left -= c;
      rest -= law[i];
      if (rest <= 0.0) rest = 0.0;
    }
    double tv = tv_distance(emp, law);
    acc += tv * tv;
  }
  return std::sqrt(acc / B);
}

double mean_position_entropy(const std::vector<State>& samples, int radix, int L) {
  if (samples.empty()) return 0.0;
  Codec c(radix, L);
  double h = 0.0;
  for (int l = 0; l < L; ++l) {
    std::vector<double> p(radix, 0.0);
    for (State s : samples) p[c.digit(s, l)] += 1.0;
    for (auto& v : p) v /= static_cast<double>(samples.size());
    h += entropy(p);
  }
  return h / L;
}

std::vector<State> to_clean(const std::vector<State>& samples, int K, int L, int radix) {
  if (radix == K) return samples;
  Codec c(radix, L);
  State overflow = ipow(static_cast<std::size_t>(K), L);
  std::vector<State> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bool masked = false;
    for (int l = 0; l < L; ++l) masked = masked || c.digit(samples[i], l) >= K;
    out[i] = masked ? overflow : clean_index(samples[i], K, L, radix);
  }
  return out;
}

double mean_nll(const std::vector<State>& samples, const DataTable& p0, int radix) {
  if (samples.empty()) return 0.0;
  auto clean = to_clean(samples, p0.K, p0.L, radix);
  double s = 0.0;
  for (State x : clean) {
    if (x >= p0.size() || p0.probs[x] == 0.0) return std::numeric_limits<double>::infinity();
    s -= std::log(p0.probs[x]);
  }
  return s / static_cast<double>(samples.size());
}

std::vector<FrontierRow> frontier_sweep(const SamplerSpec& base, const std::vector<Modifier>& modifiers,
                                        const std::vector<int>& nfes, std::size_t N, std::uint64_t seed,
                                        const DataTable& p0) {
  std::vector<FrontierRow> rows;
  if (!base.predictor) throw ConfigError("frontier: no predictor");
  const auto& ps = base.predictor->spec();
  double last = base.grid.times.back();
  Terminal term = last == 1.0 ? Terminal::One : Terminal::Floor;
  double eps = last == 1.0 ? 1e-3 : 1.0 - last;
  for (const auto& m : modifiers)
    for (int nfe : nfes) {
      SamplerSpec s = base;
      s.modifier = m;
      s.grid = TimeGrid::uniform(nfe, term, eps);
      auto xs = sample_endpoints(s, N, seed);
      int radix = s.output_radix();
      auto clean = to_clean(xs, ps.K, ps.L, radix);
      auto emp = EmpiricalDistribution::from_samples(clean, p0.size() + 1);
      auto pe = emp.probs();
      pe.pop_back();
      double tv = tv_distance(pe, p0.probs) + 0.5 * static_cast<double>(emp.counts.back()) / static_cast<double>(N);
      rows.push_back(FrontierRow{modifier_kind_name(m.kind), m.value, nfe, tv, mean_position_entropy(xs, radix, ps.L),
                                 mean_nll(xs, p0, radix), N, seed});
    }
  return rows;
}

}  // namespace revdiff
