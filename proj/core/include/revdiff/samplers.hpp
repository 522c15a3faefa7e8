#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "revdiff/losses.hpp"
#include "revdiff/oracle.hpp"
#include "revdiff/predict.hpp"

namespace revdiff {

enum class ModifierKind { None, Temperature, TopP };

struct Modifier {
  ModifierKind kind = ModifierKind::None;
  double value = 1.0;
  Representation applied_to = Representation::Denoiser;

  static Modifier none() { return {}; }
  static Modifier temperature(double tau, Representation r = Representation::Denoiser) {
    return {ModifierKind::Temperature, tau, r};
  }
  static Modifier top_p(double p, Representation r = Representation::Denoiser) { return {ModifierKind::TopP, p, r}; }
  void validate() const;
};

std::string modifier_kind_name(ModifierKind k);
ModifierKind parse_modifier_kind(const std::string& s);

// Temperature(1) and TopP(1) return the input unchanged.
Row apply_modifier(const Modifier& m, std::span<const double> row);

struct PCConfig {
  int M = 0;
  int k = 1;
  // Also run the corrector after the final step to s = 0.
  bool at_zero = false;
  void validate(int L) const;
};

// Counter-based generator: the stream is a pure function of its key.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  CounterRng(std::uint64_t seed, std::uint64_t sample, std::uint64_t step, std::uint64_t sweep, std::uint64_t position);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();
  // Uniform in [0, 1).
  double uniform();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
};

// Inverse-CDF draw; never returns a zero-probability index.
int sample_categorical(std::span<const double> p, double u);

double margin_score(std::span<const double> cond, int current);

enum class SamplerKind { Ancestral, PredictorCorrector, AUDM, ReAUDM, MUDM, Euler, TauLeap };

std::string sampler_name(SamplerKind k);
SamplerKind parse_sampler(const std::string& s);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::Ancestral;
  PredictorPtr predictor;
  ParamChoice param{};
  TimeGrid grid = TimeGrid::uniform(4);
  Modifier modifier{};
  PCConfig pc{};
  void validate() const;
  // Radix of the returned states: vocab() for ancestral/PC, K otherwise.
  int output_radix() const;
};

// Individual samplers. States are returned in the sampler's output coding.
State ancestral_sample(const Predictor& p, ParamChoice param, const TimeGrid& grid, const Modifier& mod, RngKey key,
                       std::vector<State>* trajectory = nullptr);
State pc_sample(const Predictor& p, ParamChoice param, const TimeGrid& grid, const PCConfig& pc, const Modifier& mod,
                RngKey key, std::vector<State>* trajectory = nullptr);
State audm_sample(const Predictor& p, const TimeGrid& grid, RngKey key, std::vector<State>* trajectory = nullptr);
State reaudm_sample(const Predictor& p, const TimeGrid& grid, RngKey key, std::vector<State>* trajectory = nullptr);
State mudm_sample(const Predictor& p, const TimeGrid& grid, RngKey key, std::vector<State>* trajectory = nullptr);

enum class CtmcScheme { Euler, TauLeap };
State euler_step(const Predictor& score, State xt, double t, double dt, RngKey key, int step);
State tau_leap_step(const Predictor& score, State xt, double t, double dt, RngKey key, int step);
State ctmc_sample(const Predictor& score, const TimeGrid& grid, CtmcScheme scheme, RngKey key,
                  std::vector<State>* trajectory = nullptr);

// Trajectory holds the state at grid indices n, n-1, ..., 0.
State run_sampler(const SamplerSpec& spec, RngKey key, std::vector<State>* trajectory = nullptr);
// Parallel over sample index; identical output for any thread count.
std::vector<State> sample_endpoints(const SamplerSpec& spec, std::size_t N, std::uint64_t seed);

// Exact law of the sampler's Markov chain at time 0 (same kernels, exact pushforward).
ExactDistribution sampler_law(const SamplerSpec& spec);

// Kernel pieces shared by samplers and their exact twins.
std::vector<Row> ancestral_rows(const Predictor& p, ParamChoice param, const Modifier& mod, State x, double s,
                                double t);
// Corrector conditionals alpha_s LOO + (1 - alpha_s)/K at every position.
std::vector<Row> corrector_conditionals(const Predictor& p, State x, double s);
// Positions resampled by one margin-based sweep: k lowest margins, ties to the lowest index.
std::vector<int> corrector_positions(const std::vector<Row>& cond, State x, int K, int L, int k);
// Off-diagonal reverse rates (beta_t / K) s(l, y) at x, stored L x K with zero diagonal.
PredictionGrid ctmc_rates(const Predictor& score, State x, double t);

// Exact pushforward of a law through a sparse kernel.
using SparseKernel = std::function<void(State x, std::vector<std::pair<State, double>>& out)>;
std::vector<double> push_law(const std::vector<double>& law, const SparseKernel& kernel);
// Exact law after one fixed-coordinate Gibbs update from the given conditionals.
std::vector<double> gibbs_pushforward(const std::vector<double>& law, const ProcessSpec& spec,
                                      const std::function<Row(State)>& conditional, int l);

}  // namespace revdiff
