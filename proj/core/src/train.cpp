#include "revdiff/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace revdiff {
namespace {

double norm2(const std::vector<double>& g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return std::sqrt(s);
}

}  // namespace

std::string optimizer_name(Optimizer o) { return o == Optimizer::GD ? "gd" : "adam"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "gd") return Optimizer::GD;
  if (s == "adam") return Optimizer::Adam;
  throw ConfigError("unknown optimizer: " + s);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (steps < 0) throw ConfigError("train: step count must be nonnegative");
  if (tol < 0.0) throw ConfigError("train: tolerance must be nonnegative");
}

double evaluate_loss(const Objective& obj, const TablePredictor& table, std::vector<double>* grad) {
  if (!grad) return obj.value(table, nullptr);
  TableGradient sink(table);
  double v = obj.value(table, &sink);
  *grad = std::move(sink.grad());
  return v;
}

TrainResult train(TablePredictor table, const Objective& obj, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult res;
  std::size_t P = table.num_params();
  std::vector<double> g, m(P, 0.0), v(P, 0.0), prev;
  double lr = cfg.lr;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 0; step < cfg.steps; ++step) {
    double loss = evaluate_loss(obj, table, &g);
    if (!std::isfinite(loss)) {
      if (prev.empty()) throw TrainingError("train: non-finite loss at step " + std::to_string(step));
      table.logits() = prev;
      lr *= 0.5;
      continue;
    }
    for (double x : g)
      if (std::isnan(x)) throw TrainingError("train: NaN gradient at step " + std::to_string(step));
    double gn = norm2(g);
    res.trace.push_back({step, loss, gn});
    if (gn <= cfg.tol) break;
    prev = table.logits();
    auto& z = table.logits();
    if (cfg.optimizer == Optimizer::GD) {
      for (std::size_t i = 0; i < P; ++i) z[i] -= lr * g[i];
    } else {
      double c1 = 1.0 - std::pow(b1, step + 1), c2 = 1.0 - std::pow(b2, step + 1);
      for (std::size_t i = 0; i < P; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        z[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
  res.table = std::move(table);
  return res;
}

TrainResult train(TablePredictor table, const DataTable& p0, const LossSpec& loss, const TrainConfig& cfg) {
  auto obj = make_objective(p0, table.spec(), loss);
  return train(std::move(table), *obj, cfg);
}

GradCheckResult grad_check(const TablePredictor& table, const Objective& obj, double epsilon, std::uint64_t seed,
                           int coords) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw DomainError("grad_check: epsilon must lie in [1e-7, 1e-3]");
  std::vector<double> g;
  evaluate_loss(obj, table, &g);
  GradCheckResult r;
  r.grad_norm = norm2(g);
  std::vector<std::size_t> idx(table.num_params());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 gen(seed);
  std::shuffle(idx.begin(), idx.end(), gen);
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(coords)));
  TablePredictor probe = table;
  for (std::size_t i : idx) {
    double z = probe.logits()[i];
    probe.logits()[i] = z + epsilon;
    double up = obj.value(probe, nullptr);
    probe.logits()[i] = z - epsilon;
    double dn = obj.value(probe, nullptr);
    probe.logits()[i] = z;
    double num = (up - dn) / (2.0 * epsilon);
    double err = std::abs(g[i] - num) / std::max({std::abs(g[i]), std::abs(num), 1e-6});
    r.max_rel_error = std::max(r.max_rel_error, err);
  }
  r.coordinates = static_cast<int>(idx.size());
  return r;
}

}  // namespace revdiff
