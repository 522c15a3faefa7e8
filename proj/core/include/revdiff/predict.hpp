#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "revdiff/core.hpp"
#include "revdiff/oracle.hpp"

namespace revdiff {

enum class Representation { Denoiser, LeaveOneOut, Score };

std::string representation_name(Representation r);
Representation parse_representation(const std::string& s);

// Row width of a representation: K for Denoiser/LOO, vocab() for Score.
int row_width(const ProcessSpec& spec, Representation r);

class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual const ProcessSpec& spec() const = 0;
  virtual Representation representation() const = 0;
  // aux is the absorbing state u for AUDM and ignored otherwise.
  virtual PredictionGrid predict(State xt, double t, std::optional<State> aux = std::nullopt) const = 0;
  // Samplers draw X0 jointly when a full posterior over K^L is available.
  virtual bool has_joint() const { return false; }
  virtual std::vector<double> joint_posterior(State xt, double t, std::optional<State> aux = std::nullopt) const;
  virtual std::string id() const = 0;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

class OraclePredictor : public Predictor {
 public:
  OraclePredictor(DataTable p0, ProcessSpec spec, Representation rep, bool joint = false);

  const ProcessSpec& spec() const override { return spec_; }
  Representation representation() const override { return rep_; }
  PredictionGrid predict(State xt, double t, std::optional<State> aux = std::nullopt) const override;
  bool has_joint() const override { return joint_; }
  std::vector<double> joint_posterior(State xt, double t, std::optional<State> aux = std::nullopt) const override;
  std::string id() const override;
  const DataTable& data() const { return p0_; }

 private:
  DataTable p0_;
  ProcessSpec spec_;
  Representation rep_;
  bool joint_;
};

// Logits indexed by (state, bin, position, token). Bin b covers (bins[b-1], bins[b]].
// AUDM tables index the lifted state x + K^L * u; Score tables store log-scores with the diagonal fixed to 1.
class TablePredictor : public Predictor {
 public:
  TablePredictor() = default;
  TablePredictor(ProcessSpec spec, Representation rep, std::vector<double> bins);
  TablePredictor(ProcessSpec spec, Representation rep, std::vector<double> bins, std::vector<double> logits);

  static TablePredictor random(ProcessSpec spec, Representation rep, std::vector<double> bins, std::uint64_t seed,
                               double scale = 1.0);
  // Bins at the right endpoints t_1..t_n of a grid.
  static std::vector<double> grid_bins(const TimeGrid& grid);

  const ProcessSpec& spec() const override { return spec_; }
  Representation representation() const override { return rep_; }
  PredictionGrid predict(State xt, double t, std::optional<State> aux = std::nullopt) const override;
  std::string id() const override;

  std::size_t num_states() const { return states_; }
  int num_bins() const { return static_cast<int>(bins_.size()); }
  int width() const { return width_; }
  const std::vector<double>& bins() const { return bins_; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }
  std::size_t num_params() const { return logits_.size(); }

  int bin_of(double t) const;
  std::size_t table_state(State xt, std::optional<State> aux) const;
  std::size_t offset(std::size_t state, int bin, int l) const {
    return ((state * bins_.size() + static_cast<std::size_t>(bin)) * spec_.L + l) * width_;
  }
  // True when the row is hard-wired (AUDM carry-over).
  bool fixed_row(State xt, std::optional<State> aux, int l) const;
  // Accumulates dL/dlogits given dL/drow for one predicted row.
  void backprop_row(State xt, double t, std::optional<State> aux, int l, std::span<const double> grow,
                    std::vector<double>& grad) const;

 private:
  ProcessSpec spec_{};
  Representation rep_ = Representation::Denoiser;
  std::vector<double> bins_;
  std::vector<double> logits_;
  std::size_t states_ = 0;
  int width_ = 0;
};

// Wraps a predictor and converts its output to another representation.
class ConvertedPredictor : public Predictor {
 public:
  ConvertedPredictor(PredictorPtr base, Representation to);

  const ProcessSpec& spec() const override { return base_->spec(); }
  Representation representation() const override { return to_; }
  PredictionGrid predict(State xt, double t, std::optional<State> aux = std::nullopt) const override;
  bool has_joint() const override { return base_->has_joint(); }
  std::vector<double> joint_posterior(State xt, double t, std::optional<State> aux = std::nullopt) const override {
    return base_->joint_posterior(xt, t, aux);
  }
  std::string id() const override;

 private:
  PredictorPtr base_;
  Representation to_;
};

// Per-row conversion at noisy token x and time t, with its vector-Jacobian product.
class RowConversion {
 public:
  RowConversion(const ProcessSpec& spec, Representation from, Representation to, int x, double t);

  Representation from() const { return from_; }
  Representation to() const { return to_; }
  Row apply(std::span<const double> in) const;
  // Given the input row and dL/d(output), returns dL/d(input).
  Row vjp(std::span<const double> in, std::span<const double> g) const;

 private:
  Row loo_to_den(std::span<const double> mu) const;
  Row den_to_loo(std::span<const double> d) const;
  Row loo_to_score(std::span<const double> mu) const;
  Row den_to_score(std::span<const double> d) const;
  Row score_to_loo(std::span<const double> r) const;
  Row vjp_loo_to_den(std::span<const double> mu, std::span<const double> g) const;
  Row vjp_den_to_loo(std::span<const double> d, std::span<const double> g) const;
  Row vjp_loo_to_score(std::span<const double> mu, std::span<const double> g) const;
  Row vjp_den_to_score(std::span<const double> d, std::span<const double> g) const;
  Row vjp_score_to_loo(std::span<const double> r, std::span<const double> g) const;
  // q_{t|0}(k -> y).
  double lik(int k, int y) const;

  ProcessSpec spec_;
  Representation from_, to_;
  int x_;
  double alpha_;
};

PredictionGrid convert(const PredictionGrid& grid, Representation from, Representation to, State xt, double t,
                       const ProcessSpec& spec);

// Adds log(1 + K alpha_t / (1 - alpha_t)) to the logit of the noisy token.
Row loo_logit_shift(std::span<const double> logits, int xt_token, double t, int K, const NoiseSchedule& sched);

// Max over substitutions y at position l of the TV between LOO rows l.
double loo_sensitivity(const Predictor& p, State xt, int l, double t);

}  // namespace revdiff
