#pragma once

#include <span>
#include <vector>

#include "revdiff/core.hpp"

namespace revdiff {

enum class BridgeExtension { Canonical, Barycentric };

// Cat(alpha_{t|s} row + (1 - alpha_{t|s}) pi). Rows of length K are zero-padded for MDM.
Row forward_kernel(const ProcessSpec& spec, std::span<const double> row, double s, double t);
Row forward_kernel(const ProcessSpec& spec, int x0, double s, double t);

// q_{s|0,t}(. | row, xt) over vocab(). UDM, MDM (masked completion) and MaxCoupling.
Row bridge(const ProcessSpec& spec, BridgeExtension ext, std::span<const double> row, int xt, double s, double t);
Row bridge_onehot(const ProcessSpec& spec, int x0, int xt, double s, double t);

// Bayes-ratio bridge q_{t|s}(x_s -> xt) q_{s|0}(row -> x_s) / q_{t|0}(row -> xt).
Row bridge_bayes(const ProcessSpec& spec, std::span<const double> row, int xt, double s, double t);

// AUDM forward with absorbing token u: Cat(alpha_{t|s} x + (1 - alpha_{t|s}) u).
Row audm_forward(const NoiseSchedule& sched, int K, int x, int u, double s, double t);
Row audm_bridge(const NoiseSchedule& sched, int K, std::span<const double> row, int xt, int u, double s, double t);

Row maxcoupling_bridge(const NoiseSchedule& sched, int K, int x0, int xt, double s, double t);
Row maxcoupling_bridge(const NoiseSchedule& sched, int K, std::span<const double> row, int xt, double s, double t);
// Joint pmf of (x_s, x_t) given x0, stored at [xs * K + xt].
std::vector<double> maxcoupling_joint(const NoiseSchedule& sched, int K, int x0, double s, double t);

// Law of the refreshed absorbing token u_s given (x0, x_s).
Row noise_resample(const NoiseSchedule& sched, int K, int x0, int xs, double s);

// Cell c < n holds tau in (t_c, t_{c+1}]; cell n holds tau > t_{s_index}.
Row tau_resample_pmf(const NoiseSchedule& sched, int K, int x0, int xs, int s_index, const TimeGrid& grid);
inline bool tau_cell_masked(int cell, int time_index) { return cell < time_index; }

}  // namespace revdiff
