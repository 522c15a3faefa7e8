#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "revdiff/core.hpp"
#include "revdiff/kernels.hpp"
#include "revdiff/predict.hpp"

namespace revdiff {

enum class Parameterization { Marginalization, BridgePlugIn };

struct ParamChoice {
  Parameterization kind = Parameterization::Marginalization;
  BridgeExtension ext = BridgeExtension::Canonical;
};

std::string param_name(ParamChoice p);
ParamChoice parse_param(const std::string& s);

// Reverse-step rows of the factorized model kernel. Each extension consumes its natural argument:
// Marginalization and Barycentric plug-in take denoiser rows, Canonical plug-in takes LOO rows.
class StepRule {
 public:
  StepRule(const ProcessSpec& spec, ParamChoice param, Representation source, double s, double t);

  static Representation target_for(const ProcessSpec& spec, ParamChoice param, Representation source);

  Representation source() const { return source_; }
  Representation target() const { return target_; }
  // Row over vocab() at noisy token x, from a predicted row in the source representation.
  Row row(std::span<const double> pred_row, int x) const;
  // Row from a row already in the target representation.
  Row row_from_target(std::span<const double> mu, int x) const;
  Row vjp(std::span<const double> pred_row, int x, std::span<const double> g) const;

 private:
  Row vjp_from_target(std::span<const double> mu, int x, std::span<const double> g) const;

  ProcessSpec spec_;
  ParamChoice param_;
  Representation source_, target_;
  double s_, t_;
  bool canonical_ = false;
  bool identity_ = false;
  std::vector<Row> onehot_;  // [x * K + k]
};

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::string descriptor;

  static Quadrature trapezoid(double a, double b, int M);
  // Composite trapezoid in log t: nodes a (b/a)^(j/M).
  static Quadrature log_trapezoid(double a, double b, int M);
  static Quadrature right_endpoint(const TimeGrid& grid);
};

// Receives dL/d(row) for every predicted row a loss touched.
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual void add(State xt, std::optional<State> aux, double t, int l, std::span<const double> g) = 0;
};

struct ContinuousOptions {
  // Adds the decoder term -log p(x0 | x_eps) at the lower quadrature limit.
  bool reconstruction = true;
};

// Generalized KL integrand b - a + a log(a/b).
double phi(double a, double b);

// KL(p_t || pi^L), the data-independent prior term.
double prior_kl(const DataTable& p0, const ProcessSpec& spec, double t);

class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::string name() const = 0;
  virtual std::string descriptor() const = 0;
  virtual double value(const Predictor& p, GradSink* sink = nullptr) const = 0;
};

enum class LossKind { NelboDiscrete, CrossEntropy, AudmContinuous, MdmContinuous, MaxCoupling, Ctmc, LinearBridge };

std::string loss_name(LossKind k);
LossKind parse_loss(const std::string& s);

struct LossSpec {
  LossKind kind = LossKind::NelboDiscrete;
  ParamChoice param{};
  TimeGrid grid = TimeGrid::uniform(4);
  std::optional<Quadrature> quadrature;  // continuous losses and CE; defaults depend on the loss
  ContinuousOptions options{};
  int M = 512;
};

// Default quadrature: log_trapezoid on [eps, 1], or [eps, 1 - eps] for the CTMC losses when alpha(1) = 0.
Quadrature default_quadrature(LossKind kind, const NoiseSchedule& sched, int M);

std::unique_ptr<Objective> make_objective(const DataTable& p0, const ProcessSpec& spec, const LossSpec& ls);

// Continuous objectives also expose their dt-integrand.
class ContinuousObjective : public Objective {
 public:
  virtual double integrand(const Predictor& p, double t) const = 0;
};

std::unique_ptr<ContinuousObjective> make_continuous(const DataTable& p0, const ProcessSpec& spec, LossKind kind,
                                                     const Quadrature& quad, ContinuousOptions opts = {});

double nelbo_discrete(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, ParamChoice param,
                      const TimeGrid& grid);
double cross_entropy_denoising(const DataTable& p0, const ProcessSpec& spec, const Predictor& p,
                               const Quadrature& quad);
double audm_nelbo_continuous(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad,
                             ContinuousOptions opts = {});
double mdm_nelbo_continuous(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad,
                            ContinuousOptions opts = {});
double maxcoupling_nelbo(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad,
                         ContinuousOptions opts = {});
double ctmc_elbo(const DataTable& p0, const ProcessSpec& spec, const Predictor& p, const Quadrature& quad);
double linear_bridge_ct_elbo(const DataTable& p0, const ProcessSpec& spec, const Predictor& p,
                             const Quadrature& quad);

struct LossReport {
  std::string loss_name;
  double value = 0.0;
  double prior_kl = 0.0;
  std::string descriptor;
  std::string predictor_id;
};

LossReport evaluate_report(const DataTable& p0, const ProcessSpec& spec, const LossSpec& ls, const Predictor& p);

}  // namespace revdiff
