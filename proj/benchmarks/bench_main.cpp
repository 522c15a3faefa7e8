#include <benchmark/benchmark.h>

#include "revdiff/train.hpp"
#include "revdiff/samplers.hpp"

using namespace revdiff;

namespace {

ProcessSpec make(int K, int L, Family f = Family::UDM) {
  ProcessSpec p;
  p.K = K;
  p.L = L;
  p.family = f;
  return p;
}

void BM_DenoiserExact(benchmark::State& st) {
  int L = static_cast<int>(st.range(0));
  auto spec = make(3, L);
  auto p0 = DataTable::dirichlet(3, L, 1);
  State x = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(denoiser_exact(p0, spec, x, 0.5));
    x = (x + 1) % spec.num_states();
  }
}
BENCHMARK(BM_DenoiserExact)->Arg(2)->Arg(4)->Arg(6);

void BM_Marginal(benchmark::State& st) {
  int L = static_cast<int>(st.range(0));
  auto spec = make(3, L);
  auto p0 = DataTable::dirichlet(3, L, 1);
  for (auto _ : st) benchmark::DoNotOptimize(marginal(p0, spec, 0.5));
}
BENCHMARK(BM_Marginal)->Arg(2)->Arg(4)->Arg(6);

void BM_LossGradient(benchmark::State& st) {
  auto kind = static_cast<LossKind>(st.range(0));
  Family f = kind == LossKind::AudmContinuous ? Family::AUDM : Family::UDM;
  auto spec = make(3, 2, f);
  auto p0 = DataTable::dirichlet(3, 2, 2);
  LossSpec ls;
  ls.kind = kind;
  auto obj = make_objective(p0, spec, ls);
  auto rep = kind == LossKind::Ctmc ? Representation::Score : Representation::Denoiser;
  auto t = TablePredictor::random(spec, rep, TablePredictor::grid_bins(ls.grid), 1);
  std::vector<double> g;
  for (auto _ : st) benchmark::DoNotOptimize(evaluate_loss(*obj, t, &g));
  st.SetLabel(obj->name());
}
BENCHMARK(BM_LossGradient)
    ->Arg(static_cast<int>(LossKind::NelboDiscrete))
    ->Arg(static_cast<int>(LossKind::CrossEntropy))
    ->Arg(static_cast<int>(LossKind::AudmContinuous))
    ->Arg(static_cast<int>(LossKind::Ctmc));

void BM_Sampler(benchmark::State& st) {
  auto kind = static_cast<SamplerKind>(st.range(0));
  Family f = Family::UDM;
  auto rep = Representation::Denoiser;
  if (kind == SamplerKind::AUDM || kind == SamplerKind::ReAUDM) f = Family::AUDM;
  if (kind == SamplerKind::MUDM) f = Family::MDM;
  if (kind == SamplerKind::Euler || kind == SamplerKind::TauLeap) rep = Representation::Score;
  auto p0 = DataTable::dirichlet(3, 4, 3);
  SamplerSpec s;
  s.kind = kind;
  s.predictor = std::make_shared<OraclePredictor>(p0, make(3, 4, f), rep);
  s.grid = rep == Representation::Score ? TimeGrid::uniform(64, Terminal::Floor, 0.05) : TimeGrid::uniform(8);
  if (kind == SamplerKind::PredictorCorrector) s.pc.M = 2;
  s.validate();
  std::uint64_t i = 0;
  for (auto _ : st) benchmark::DoNotOptimize(run_sampler(s, RngKey{0, i++}));
  st.SetLabel(sampler_name(kind));
}
BENCHMARK(BM_Sampler)->DenseRange(0, 6);

void BM_SamplerLaw(benchmark::State& st) {
  auto p0 = DataTable::dirichlet(3, 3, 3);
  SamplerSpec s;
  s.predictor = std::make_shared<OraclePredictor>(p0, make(3, 3), Representation::Denoiser);
  for (auto _ : st) benchmark::DoNotOptimize(sampler_law(s));
}
BENCHMARK(BM_SamplerLaw);

}  // namespace

BENCHMARK_MAIN();
