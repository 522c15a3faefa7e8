#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revdiff/losses.hpp"
#include "revdiff/predict.hpp"

namespace revdiff {

enum class Optimizer { GD, Adam };

std::string optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  double lr = 0.1;
  int steps = 5000;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  // Stops early once the gradient norm falls to this value.
  double tol = 0.0;
  void validate() const;
};

struct TraceRow {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  TablePredictor table;
  std::vector<TraceRow> trace;
};

// Accumulates dL/dlogits of a table.
class TableGradient : public GradSink {
 public:
  explicit TableGradient(const TablePredictor& table) : table_(table), grad_(table.num_params(), 0.0) {}
  void add(State xt, std::optional<State> aux, double t, int l, std::span<const double> g) override {
    table_.backprop_row(xt, t, aux, l, g, grad_);
  }
  std::vector<double>& grad() { return grad_; }

 private:
  const TablePredictor& table_;
  std::vector<double> grad_;
};

double evaluate_loss(const Objective& obj, const TablePredictor& table, std::vector<double>* grad = nullptr);

TrainResult train(TablePredictor table, const Objective& obj, const TrainConfig& cfg);
TrainResult train(TablePredictor table, const DataTable& p0, const LossSpec& loss, const TrainConfig& cfg);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double grad_norm = 0.0;
  int coordinates = 0;
};

// Central differences on `coords` random coordinates.
GradCheckResult grad_check(const TablePredictor& table, const Objective& obj, double epsilon, std::uint64_t seed = 0,
                           int coords = 64);

}  // namespace revdiff
