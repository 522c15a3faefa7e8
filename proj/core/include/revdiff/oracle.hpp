#pragma once

#include <functional>
#include <string>
#include <vector>

#include "revdiff/core.hpp"
#include "revdiff/kernels.hpp"

namespace revdiff {

struct ExactDistribution {
  std::string space;
  std::vector<double> probs;
};

// L x C grid of rows (C = K for Denoiser/LOO, vocab() for Score).
struct PredictionGrid {
  int L = 0;
  int C = 0;
  std::vector<double> v;

  PredictionGrid() = default;
  PredictionGrid(int L_, int C_, double fill = 0.0) : L(L_), C(C_), v(static_cast<std::size_t>(L_) * C_, fill) {}
  double* row(int l) { return v.data() + static_cast<std::size_t>(l) * C; }
  const double* row(int l) const { return v.data() + static_cast<std::size_t>(l) * C; }
  std::span<double> span(int l) { return {row(l), static_cast<std::size_t>(C)}; }
  std::span<const double> span(int l) const { return {row(l), static_cast<std::size_t>(C)}; }
  double& at(int l, int k) { return v[static_cast<std::size_t>(l) * C + k]; }
  double at(int l, int k) const { return v[static_cast<std::size_t>(l) * C + k]; }
};

std::string space_descriptor(const ProcessSpec& spec);

// K x V matrix of q_{t|s}(x0 -> x) for clean x0, row-major.
std::vector<double> forward_matrix(const ProcessSpec& spec, double s, double t);

ExactDistribution marginal(const DataTable& p0, const ProcessSpec& spec, double t);
// p_t at one state.
double marginal_at(const DataTable& p0, const ProcessSpec& spec, State xt, double t);

// p_{0|t}(. | xt) over the clean space.
std::vector<double> joint_posterior(const DataTable& p0, const ProcessSpec& spec, State xt, double t);
PredictionGrid denoiser_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double t);
PredictionGrid loo_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double t);
PredictionGrid score_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double t);
Row gibbs_conditional_exact(const DataTable& p0, const ProcessSpec& spec, State xt, int l, double t);
// Exact non-factorized reverse kernel p_{s|t}(. | xt) over vocab()^L.
ExactDistribution reverse_transition_exact(const DataTable& p0, const ProcessSpec& spec, State xt, double s, double t);

// AUDM quantities with absorbing state u (both over K^L).
std::vector<double> audm_joint_posterior(const DataTable& p0, const ProcessSpec& spec, State xt, State u, double t);
PredictionGrid audm_denoiser_exact(const DataTable& p0, const ProcessSpec& spec, State xt, State u, double t);
// p_t(x | u) over K^L.
std::vector<double> audm_conditional_marginal(const DataTable& p0, const ProcessSpec& spec, State u, double t);

enum class Lifting { ReAUDM, MUDM };

// Posterior over K^L for lifted state (x, aux) at grid index i.
using PosteriorFn = std::function<void(State x, State aux, int i, std::vector<double>& out)>;

// Lifted state index: x + K^L * aux.  ReAUDM aux = u (radix K), MUDM aux = tau cells (radix n + 1).
std::vector<double> lifted_initial_law(const DataTable& p0, const ProcessSpec& spec, const TimeGrid& grid,
                                       Lifting lifting);
// Pushes a lifted law through the one-step lifted kernels; returns X-marginals indexed by grid time.
std::vector<ExactDistribution> lifted_pushforward(const ProcessSpec& spec, const TimeGrid& grid, Lifting lifting,
                                                  std::vector<double> init, const PosteriorFn& posterior,
                                                  std::size_t cap = kLiftedCap);
std::vector<ExactDistribution> lifted_pushforward(const DataTable& p0, const ProcessSpec& spec, const TimeGrid& grid,
                                                  Lifting lifting, std::size_t cap = kLiftedCap);

// MDM state in (K+1)^L obtained by masking the positions whose tau cell lies below grid index i.
State masked_view(State x, State cells, int K, int L, int n, int i);

// X-marginals of the exact reverse chain started from p_{t_n}, indexed by grid time.
std::vector<ExactDistribution> reverse_chain_marginals(const DataTable& p0, const ProcessSpec& spec,
                                                       const TimeGrid& grid);

}  // namespace revdiff
