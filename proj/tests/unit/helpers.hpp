#pragma once

#include <cmath>
#include <span>

#include "revdiff/core.hpp"

namespace testing {

inline double max_abs(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

inline revdiff::ProcessSpec spec(int K, int L, revdiff::Family f = revdiff::Family::UDM,
                                 revdiff::ScheduleKind s = revdiff::ScheduleKind::Linear) {
  revdiff::ProcessSpec p;
  p.K = K;
  p.L = L;
  p.family = f;
  p.schedule.kind = s;
  return p;
}

inline revdiff::Row onehot(int n, int k) {
  revdiff::Row r(n, 0.0);
  r[k] = 1.0;
  return r;
}

// Small asymmetric table used across suites; state index = x^0 + 2 x^1.
inline revdiff::DataTable small_p0() { return revdiff::DataTable(2, 2, {0.4, 0.3, 0.2, 0.1}); }

}  // namespace testing
