#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revdiff/oracle.hpp"
#include "revdiff/samplers.hpp"

namespace revdiff {

struct EmpiricalDistribution {
  std::vector<std::uint64_t> counts;
  std::uint64_t N = 0;

  static EmpiricalDistribution from_samples(const std::vector<State>& samples, std::size_t space_size);
  std::vector<double> probs() const;
};

double tv_distance(std::span<const double> a, std::span<const double> b);
double tv_distance(const EmpiricalDistribution& emp, const ExactDistribution& exact);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  int bins = 0;
};

// Pearson statistic; states with expected count below 5 are pooled into one bin.
ChiSquareResult chi_square_gof(const EmpiricalDistribution& emp, const ExactDistribution& exact);
double chi_square_quantile(int dof, double q);

// RMS of TV(empirical, law) over B parametric bootstrap draws of size N.
double tv_standard_error(const std::vector<double>& law, std::uint64_t N, int B = 200, std::uint64_t seed = 0);

// Per-position empirical token entropy averaged over positions.
double mean_position_entropy(const std::vector<State>& samples, int radix, int L);
// Mean -log p0(x) over samples given in radix `radix`; +inf if any sample has zero mass.
double mean_nll(const std::vector<State>& samples, const DataTable& p0, int radix);
// Samples re-encoded over K^L; masked samples are mapped to K^L (one overflow slot).
std::vector<State> to_clean(const std::vector<State>& samples, int K, int L, int radix);

struct FrontierRow {
  std::string modifier_kind;
  double modifier_value = 1.0;
  int nfe = 0;
  double tv = 0.0;
  double entropy = 0.0;
  double nll_p0 = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

// One row per (modifier, nfe); grids are uniform with the base grid's terminal convention.
std::vector<FrontierRow> frontier_sweep(const SamplerSpec& base, const std::vector<Modifier>& modifiers,
                                        const std::vector<int>& nfes, std::size_t N, std::uint64_t seed,
                                        const DataTable& p0);

}  // namespace revdiff
