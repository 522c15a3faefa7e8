#include "revdiff/oracle.hpp"

#include <cmath>

namespace revdiff {
namespace {

// Applies a per-position linear map (rows: input digit, cols: output digit).
std::vector<double> apply_positionwise(const std::vector<double>& in, int L, int vin, int vout,
                                       const std::vector<std::vector<double>>& mats) {
  std::vector<double> cur = in;
  std::size_t stride = 1;
  for (int l = 0; l < L; ++l) {
    const auto& M = mats[mats.size() == 1 ? 0 : l];
    std::size_t high = cur.size() / (stride * vin);
    std::vector<double> next(stride * vout * high, 0.0);
    for (std::size_t h = 0; h < high; ++h)
      for (int d = 0; d < vin; ++d)
        for (std::size_t lo = 0; lo < stride; ++lo) {
          double v = cur[lo + stride * (d + static_cast<std::size_t>(vin) * h)];
          if (v == 0.0) continue;
          for (int e = 0; e < vout; ++e) {
            double m = M[static_cast<std::size_t>(d) * vout + e];
            if (m != 0.0) next[lo + stride * (e + static_cast<std::size_t>(vout) * h)] += v * m;
          }
        }
    cur.swap(next);
    stride *= vout;
  }
  return cur;
}

double weight_except(const DataTable& p0, const Codec& clean, const Codec& noisy, const std::vector<double>& M,
                     int V, State x0, State xt, int skip) {
  double w = p0.probs[x0];
  for (int l = 0; l < p0.L && w != 0.0; ++l) {
    if (l == skip) continue;
    w *= M[static_cast<std::size_t>(clean.digit(x0, l)) * V + noisy.digit(xt, l)];
  }
  return w;
}

void check_compatible(const DataTable& p0, const ProcessSpec& spec) {
  if (p0.K != spec.K || p0.L != spec.L) throw DomainError("p0 does not match the process spec");
  spec.validate();
}

ProcessSpec udm_view(const ProcessSpec& spec) {
  ProcessSpec u = spec;
  u.family = Family::UDM;
  return u;
}

}  // namespace

std::string space_descriptor(const ProcessSpec& spec) {
  return "X[family=" + family_name(spec.family) + ",K=" + std::to_string(spec.K) + ",L=" + std::to_string(spec.L) +
         ",V=" + std::to_string(spec.vocab()) + "]";
}

std::vector<double> forward_matrix(const ProcessSpec& spec, double s, double t) {
  int K = spec.K, V = spec.vocab();
  std::vector<double> M(static_cast<std::size_t>(K) * V);
  ProcessSpec f = spec.family == Family::AUDM ? udm_view(spec) : spec;
  for (int k = 0; k < K; ++k) {
    Row r = forward_kernel(f, k, s, t);
    for (int x = 0; x < V; ++x) M[static_cast<std::size_t>(k) * V + x] = r[x];
  }
  return M;
}

ExactDistribution marginal(const DataTable& p0, const ProcessSpec& spec, double t) {
  check_compatible(p0, spec);
  auto M = forward_matrix(spec, 0.0, t);
  return {space_descriptor(spec), apply_positionwise(p0.probs, spec.L, spec.K, spec.vocab(), {M})};
}

double marginal_at(const DataTable& p0, const ProcessSpec& spec, State xt, double t) {
  check_compatible(p0, spec);
  auto M = forward_matrix(spec, 0.0, t);
  Codec clean(spec.K, spec.L), noisy(spec.vocab(), spec.L);
  if (xt >= noisy.size()) throw DomainError("state out of range");
  double p = 0.0;
  for (State x0 = 0; x0 < clean.size(); ++x0) p += weight_except(p0, clean, noisy, M, spec.vocab(), x0, xt, -1);
  return p;
}

std::vector<double> joint_posterior(const DataTable& p0, const ProcessSpec& spec, State xt, double t) {
  check_compatible(p0, spec);
  auto M = forward_matrix(spec, 0.0, t);
  Codec clean(spec.K, spec.L), noisy(spec.vocab(), spec.L);
  if (xt >= noisy.size()) throw DomainError("state out of range");
  std::vector<double> w(clean.size());
  double z = 0.0;
  for (State x0 = 0; x0 < clean.size(); ++x0) {
    w[x0] = weight_except(p0, clean, noisy, M, spec.vocab(), x0, xt, -1);
    z += w[x0];
  }
  if (!(z > 0.0)) throw SupportError("p_t(x_t) = 0");
  for (auto& v : w) v /= z;
  return w;
}

PredictionGrid denoiser_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double t) {
  auto post = joint_posterior(p0, spec, xt, t);
  Codec clean(spec.K, spec.L);
  PredictionGrid g(spec.L, spec.K);
  for (State x0 = 0; x0 < clean.size(); ++x0) {
    if (post[x0] == 0.0) continue;
    for (int l = 0; l < spec.L; ++l) g.at(l, clean.digit(x0, l)) += post[x0];
  }
  return g;
}

PredictionGrid loo_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double t) {
  check_compatible(p0, spec);
  auto M = forward_matrix(spec, 0.0, t);
  Codec clean(spec.K, spec.L), noisy(spec.vocab(), spec.L);
  if (xt >= noisy.size()) throw DomainError("state out of range");
  PredictionGrid g(spec.L, spec.K);
  for (int l = 0; l < spec.L; ++l) {
    double z = 0.0;
    for (State x0 = 0; x0 < clean.size(); ++x0) {
      double w = weight_except(p0, clean, noisy, M, spec.vocab(), x0, xt, l);
      g.at(l, clean.digit(x0, l)) += w;
      z += w;
    }
    if (!(z > 0.0)) throw SupportError("p_t(x_t^{-l}) = 0");
    for (int k = 0; k < spec.K; ++k) g.at(l, k) /= z;
  }
  return g;
}

PredictionGrid score_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double t) {
  check_compatible(p0, spec);
  auto M = forward_matrix(spec, 0.0, t);
  Codec clean(spec.K, spec.L), noisy(spec.vocab(), spec.L);
  if (xt >= noisy.size()) throw DomainError("state out of range");
  int V = spec.vocab();
  auto pt = [&](State x) {
    double p = 0.0;
    for (State x0 = 0; x0 < clean.size(); ++x0) p += weight_except(p0, clean, noisy, M, V, x0, x, -1);
    return p;
  };
  double base = pt(xt);
  if (!(base > 0.0)) throw SupportError("p_t(x_t) = 0");
  PredictionGrid g(spec.L, V);
  for (int l = 0; l < spec.L; ++l)
    for (int y = 0; y < V; ++y)
      g.at(l, y) = y == noisy.digit(xt, l) ? 1.0 : pt(noisy.with_digit(xt, l, y)) / base;
  return g;
}

Row gibbs_conditional_exact(const DataTable& p0, const ProcessSpec& spec, State xt, int l, double t) {
  check_compatible(p0, spec);
  if (l < 0 || l >= spec.L) throw DomainError("position out of range");
  auto M = forward_matrix(spec, 0.0, t);
  Codec clean(spec.K, spec.L), noisy(spec.vocab(), spec.L);
  int V = spec.vocab();
  Row r(V, 0.0);
  double z = 0.0;
  for (int y = 0; y < V; ++y) {
    State x = noisy.with_digit(xt, l, y);
    for (State x0 = 0; x0 < clean.size(); ++x0) r[y] += weight_except(p0, clean, noisy, M, V, x0, x, -1);
    z += r[y];
  }
  if (!(z > 0.0)) throw SupportError("p_t(x_t^{-l}) = 0");
  for (auto& v : r) v /= z;
  return r;
}

ExactDistribution reverse_transition_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double s,
                                           double t) {
  if (spec.family == Family::AUDM) throw ArgumentError("reverse_transition_exact: AUDM needs the absorbing state");
  if (s > t) throw OrderingError("require s <= t");
  auto post = joint_posterior(p0, spec, xt, t);
  Codec clean(spec.K, spec.L), noisy(spec.vocab(), spec.L);
  int V = spec.vocab(), L = spec.L;
  std::vector<double> out(noisy.size(), 0.0);
  std::vector<Row> rows(L);
  for (State x0 = 0; x0 < clean.size(); ++x0) {
    if (post[x0] == 0.0) continue;
    for (int l = 0; l < L; ++l) rows[l] = bridge_onehot(spec, clean.digit(x0, l), noisy.digit(xt, l), s, t);
    for (State xs = 0; xs < noisy.size(); ++xs) {
      double p = post[x0];
      for (int l = 0; l < L && p != 0.0; ++l) p *= rows[l][noisy.digit(xs, l)];
      out[xs] += p;
    }
  }
  (void)V;
  return {space_descriptor(spec), std::move(out)};
}

std::vector<double> audm_joint_posterior(const DataTable& p0, const ProcessSpec& spec, State xt, State u, double t) {
  check_compatible(p0, spec);
  Codec c(spec.K, spec.L);
  if (xt >= c.size() || u >= c.size()) throw DomainError("state out of range");
  double a = spec.schedule.alpha(t);
  std::vector<double> w(c.size());
  double z = 0.0;
  for (State x0 = 0; x0 < c.size(); ++x0) {
    double p = p0.probs[x0];
    for (int l = 0; l < spec.L && p != 0.0; ++l) {
      int x = c.digit(xt, l);
      p *= a * (c.digit(x0, l) == x ? 1.0 : 0.0) + (1.0 - a) * (c.digit(u, l) == x ? 1.0 : 0.0);
    }
    w[x0] = p;
    z += p;
  }
  if (!(z > 0.0)) throw SupportError("p_t(x_t | u) = 0");
  for (auto& v : w) v /= z;
  return w;
}

PredictionGrid audm_denoiser_exact(const DataTable& p0, const ProcessSpec& spec, State xt, State u, double t) {
  auto post = audm_joint_posterior(p0, spec, xt, u, t);
  Codec c(spec.K, spec.L);
  PredictionGrid g(spec.L, spec.K);
  for (State x0 = 0; x0 < c.size(); ++x0) {
    if (post[x0] == 0.0) continue;
    for (int l = 0; l < spec.L; ++l) g.at(l, c.digit(x0, l)) += post[x0];
  }
  return g;
}

std::vector<double> audm_conditional_marginal(const DataTable& p0, const ProcessSpec& spec, State u, double t) {
  check_compatible(p0, spec);
  Codec c(spec.K, spec.L);
  int K = spec.K;
  std::vector<std::vector<double>> mats(spec.L);
  for (int l = 0; l < spec.L; ++l) {
    mats[l].assign(static_cast<std::size_t>(K) * K, 0.0);
    for (int k = 0; k < K; ++k) {
      Row r = audm_forward(spec.schedule, K, k, c.digit(u, l), 0.0, t);
      for (int x = 0; x < K; ++x) mats[l][static_cast<std::size_t>(k) * K + x] = r[x];
    }
  }
  return apply_positionwise(p0.probs, spec.L, K, K, mats);
}

State masked_view(State x, State cells, int K, int L, int n, int i) {
  Codec cx(K, L), cc(n + 1, L), cv(K + 1, L);
  State v = 0;
  for (int l = 0; l < L; ++l) {
    int tok = tau_cell_masked(cc.digit(cells, l), i) ? K : cx.digit(x, l);
    v += static_cast<State>(tok) * cv.stride(l);
  }
  return v;
}

std::vector<double> lifted_initial_law(const DataTable& p0, const ProcessSpec& spec, const TimeGrid& grid,
                                       Lifting lifting) {
  check_compatible(p0, spec);
  int K = spec.K, L = spec.L, n = grid.n();
  double tn = grid.t(n);
  Codec cx(K, L);
  std::size_t N = cx.size();
  if (lifting == Lifting::ReAUDM) {
    std::size_t total = N * N;
    if (total > kLiftedCap) throw CapacityError("lifted space exceeds cap");
    std::vector<double> out(total, 0.0);
    double nu = 1.0 / static_cast<double>(N);
    for (State u = 0; u < N; ++u) {
      auto pxu = audm_conditional_marginal(p0, spec, u, tn);
      for (State x = 0; x < N; ++x) out[x + N * u] = nu * pxu[x];
    }
    return out;
  }
  int C = n + 1;
  Codec cc(C, L);
  std::size_t total = N * cc.size();
  if (total > kLiftedCap) throw CapacityError("lifted space exceeds cap");
  // Per position: x0 -> (x, cell) pair with pair index x + K * cell.
  const auto& sc = spec.schedule;
  std::vector<double> M(static_cast<std::size_t>(K) * K * C, 0.0);
  for (int x0 = 0; x0 < K; ++x0) {
    for (int c = 0; c < n; ++c) {
      double m = sc.alpha(grid.t(c)) - sc.alpha(grid.t(c + 1));
      for (int x = 0; x < K; ++x) M[static_cast<std::size_t>(x0) * K * C + x + K * c] = m / K;
    }
    M[static_cast<std::size_t>(x0) * K * C + x0 + K * n] = sc.alpha(tn);
  }
  auto pairs = apply_positionwise(p0.probs, L, K, K * C, {M});
  Codec cp(K * C, L);
  std::vector<double> out(total, 0.0);
  for (State p = 0; p < pairs.size(); ++p) {
    if (pairs[p] == 0.0) continue;
    State x = 0, cells = 0;
    for (int l = 0; l < L; ++l) {
      int d = cp.digit(p, l);
      x += static_cast<State>(d % K) * cx.stride(l);
      cells += static_cast<State>(d / K) * cc.stride(l);
    }
    out[x + N * cells] += pairs[p];
  }
  return out;
}

std::vector<ExactDistribution> lifted_pushforward(const ProcessSpec& spec_in, const TimeGrid& grid, Lifting lifting,
                                                  std::vector<double> law, const PosteriorFn& posterior,
                                                  std::size_t cap) {
  ProcessSpec spec = udm_view(spec_in);
  int K = spec.K, L = spec.L, n = grid.n();
  Codec cx(K, L);
  std::size_t N = cx.size();
  int A = lifting == Lifting::ReAUDM ? K : n + 1;
  Codec ca(A, L);
  if (N * ca.size() > cap) throw CapacityError("lifted space exceeds cap");
  if (law.size() != N * ca.size()) throw DomainError("lifted law has wrong size");
  std::string desc = "X[K=" + std::to_string(K) + ",L=" + std::to_string(L) + "]";
  auto xmarg = [&](const std::vector<double>& v) {
    std::vector<double> m(N, 0.0);
    for (std::size_t a = 0; a < ca.size(); ++a)
      for (State x = 0; x < N; ++x) m[x] += v[x + N * a];
    return m;
  };
  std::vector<ExactDistribution> out(n + 1);
  out[n] = {desc, xmarg(law)};
  std::vector<double> post, W(N * N);
  int P = K * A;  // per-position (x_s, aux_s) pairs
  Codec cp(P, L);
  std::vector<State> pair_x(P), pair_a(P);
  for (int i = n; i >= 1; --i) {
    double t = grid.t(i), s = grid.t(i - 1);
    std::fill(W.begin(), W.end(), 0.0);
    for (std::size_t a = 0; a < ca.size(); ++a)
      for (State x = 0; x < N; ++x) {
        double m = law[x + N * a];
        if (m == 0.0) continue;
        posterior(x, a, i, post);
        for (State x0 = 0; x0 < N; ++x0)
          if (post[x0] != 0.0) W[x * N + x0] += m * post[x0];
      }
    // Per-position kernels T[x0tok][xtok][pair].
    std::vector<double> T(static_cast<std::size_t>(K) * K * P, 0.0);
    for (int x0 = 0; x0 < K; ++x0)
      for (int xt = 0; xt < K; ++xt) {
        Row b = bridge_onehot(spec, x0, xt, s, t);
        for (int xs = 0; xs < K; ++xs) {
          if (b[xs] == 0.0) continue;
          Row aux = lifting == Lifting::ReAUDM ? noise_resample(spec.schedule, K, x0, xs, s)
                                               : tau_resample_pmf(spec.schedule, K, x0, xs, i - 1, grid);
          for (int c = 0; c < A; ++c)
            T[(static_cast<std::size_t>(x0) * K + xt) * P + xs + K * c] = b[xs] * aux[c];
        }
      }
    std::vector<double> next(N * ca.size(), 0.0);
    std::vector<const double*> rows(L);
    for (State x = 0; x < N; ++x)
      for (State x0 = 0; x0 < N; ++x0) {
        double w = W[x * N + x0];
        if (w == 0.0) continue;
        for (int l = 0; l < L; ++l)
          rows[l] = &T[(static_cast<std::size_t>(cx.digit(x0, l)) * K + cx.digit(x, l)) * P];
        for (State p = 0; p < cp.size(); ++p) {
          double v = w;
          State xs = 0, as = 0;
          for (int l = 0; l < L && v != 0.0; ++l) {
            int d = cp.digit(p, l);
            v *= rows[l][d];
            xs += static_cast<State>(d % K) * cx.stride(l);
            as += static_cast<State>(d / K) * ca.stride(l);
          }
          if (v != 0.0) next[xs + N * as] += v;
        }
      }
    law.swap(next);
    out[i - 1] = {desc, xmarg(law)};
  }
  return out;
}

std::vector<ExactDistribution> lifted_pushforward(const DataTable& p0, const ProcessSpec& spec, const TimeGrid& grid,
                                                  Lifting lifting, std::size_t cap) {
  check_compatible(p0, spec);
  int K = spec.K, L = spec.L, n = grid.n();
  auto init = lifted_initial_law(p0, spec, grid, lifting);
  Codec cx(K, L);
  std::size_t N = cx.size();
  PosteriorFn fn;
  if (lifting == Lifting::ReAUDM) {
    ProcessSpec a = spec;
    a.family = Family::AUDM;
    fn = [p0, a, &grid](State x, State u, int i, std::vector<double>& out) {
      out = audm_joint_posterior(p0, a, x, u, grid.t(i));
    };
  } else {
    fn = [p0, K, L, n, N](State x, State cells, int i, std::vector<double>& out) {
      State view = masked_view(x, cells, K, L, n, i);
      Codec cv(K + 1, L), c(K, L);
      out.assign(N, 0.0);
      double z = 0.0;
      for (State x0 = 0; x0 < N; ++x0) {
        double w = p0.probs[x0];
        for (int l = 0; l < L && w != 0.0; ++l) {
          int d = cv.digit(view, l);
          if (d != K && d != c.digit(x0, l)) w = 0.0;
        }
        out[x0] = w;
        z += w;
      }
      if (!(z > 0.0)) throw SupportError("masked view has zero probability");
      for (auto& v : out) v /= z;
    };
  }
  return lifted_pushforward(spec, grid, lifting, std::move(init), fn, cap);
}

std::vector<ExactDistribution> reverse_chain_marginals(const DataTable& p0, const ProcessSpec& spec,
                                                       const TimeGrid& grid) {
  int n = grid.n();
  std::vector<ExactDistribution> out(n + 1);
  out[n] = marginal(p0, spec, grid.t(n));
  for (int i = n; i >= 1; --i) {
    const auto& cur = out[i].probs;
    std::vector<double> next(cur.size(), 0.0);
    for (State x = 0; x < cur.size(); ++x) {
      if (cur[x] == 0.0) continue;
      auto k = reverse_transition_exact(p0, spec, x, grid.t(i - 1), grid.t(i));
      for (State y = 0; y < next.size(); ++y) next[y] += cur[x] * k.probs[y];
    }
    out[i - 1] = {out[i].space, std::move(next)};
  }
  return out;
}

}  // namespace revdiff
