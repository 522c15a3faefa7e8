#include "revdiff/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace revdiff {

double NoiseSchedule::alpha(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("alpha: t outside [0,1]: " + std::to_string(t));
  switch (kind) {
    case ScheduleKind::Linear:
      return 1.0 - t;
    case ScheduleKind::Geometric:
      return t == 0.0 ? 1.0 : std::pow(kGeometricDelta, t);
  }
  return 0.0;
}

double NoiseSchedule::alpha_prime(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("alpha_prime: t outside [0,1]");
  switch (kind) {
    case ScheduleKind::Linear:
      return -1.0;
    case ScheduleKind::Geometric:
      return std::log(kGeometricDelta) * std::pow(kGeometricDelta, t);
  }
  return 0.0;
}

double NoiseSchedule::alpha_ratio(double s, double t) const {
  if (s > t) throw OrderingError("alpha_ratio: s > t");
  if (s == t) return 1.0;
  double as = alpha(s);
  if (as == 0.0) throw DomainError("alpha_ratio: alpha(s) = 0");
  return alpha(t) / as;
}

double NoiseSchedule::beta(double t) const {
  double a = alpha(t);
  if (a == 0.0) throw DomainError("beta: alpha(t) = 0");
  return -alpha_prime(t) / a;
}

void NoiseSchedule::validate() const {
  if (!(eps_floor > 0.0 && eps_floor < 0.5)) throw ConfigError("eps_floor must lie in (0, 0.5)");
}

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

std::size_t checked_pow(std::size_t base, int exp, std::size_t cap) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (r > cap / base) throw CapacityError("state space exceeds enumeration cap " + std::to_string(cap));
    r *= base;
  }
  if (r > cap) throw CapacityError("state space exceeds enumeration cap " + std::to_string(cap));
  return r;
}

std::size_t ProcessSpec::num_states() const { return ipow(static_cast<std::size_t>(vocab()), L); }
std::size_t ProcessSpec::num_clean_states() const { return ipow(static_cast<std::size_t>(K), L); }

Row ProcessSpec::reference() const {
  Row pi(vocab(), 0.0);
  if (family == Family::MDM) {
    pi[K] = 1.0;
  } else {
    std::fill(pi.begin(), pi.end(), 1.0 / K);
  }
  return pi;
}

void ProcessSpec::validate(std::size_t cap) const {
  if (K < 2) throw ConfigError("K must be >= 2");
  if (L < 1) throw ConfigError("L must be >= 1");
  schedule.validate();
  checked_pow(static_cast<std::size_t>(vocab()), L, cap);
}

std::string family_name(Family f) {
  switch (f) {
    case Family::UDM: return "UDM";
    case Family::MDM: return "MDM";
    case Family::AUDM: return "AUDM";
    case Family::MaxCoupling: return "MaxCoupling";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  if (s == "UDM" || s == "udm") return Family::UDM;
  if (s == "MDM" || s == "mdm") return Family::MDM;
  if (s == "AUDM" || s == "audm") return Family::AUDM;
  if (s == "MaxCoupling" || s == "maxcoupling" || s == "mc") return Family::MaxCoupling;
  throw ConfigError("unknown family: " + s);
}

std::string schedule_name(ScheduleKind k) { return k == ScheduleKind::Linear ? "Linear" : "Geometric"; }

ScheduleKind parse_schedule(const std::string& s) {
  if (s == "Linear" || s == "linear") return ScheduleKind::Linear;
  if (s == "Geometric" || s == "geometric") return ScheduleKind::Geometric;
  throw ConfigError("unknown schedule: " + s);
}

Codec::Codec(int radix, int length) : radix_(radix), length_(length), pow_(length + 1) {
  pow_[0] = 1;
  for (int i = 1; i <= length; ++i) pow_[i] = pow_[i - 1] * static_cast<std::size_t>(radix);
  size_ = pow_[length];
}

State Codec::encode(std::span<const int> tokens) const {
  if (static_cast<int>(tokens.size()) != length_) throw DomainError("encode: wrong sequence length");
  State s = 0;
  for (int i = 0; i < length_; ++i) {
    if (tokens[i] < 0 || tokens[i] >= radix_) throw DomainError("encode: token out of range");
    s += static_cast<State>(tokens[i]) * pow_[i];
  }
  return s;
}

std::vector<int> Codec::decode(State s) const {
  if (s >= size_) throw DomainError("decode: index out of range");
  std::vector<int> out(length_);
  for (int i = 0; i < length_; ++i) out[i] = digit(s, i);
  return out;
}

State encode_state(std::span<const int> tokens, int radix) {
  return Codec(radix, static_cast<int>(tokens.size())).encode(tokens);
}

std::vector<int> decode_state(State index, int radix, int length) { return Codec(radix, length).decode(index); }

State clean_index(State s, int K, int L, int radix) {
  Codec in(radix, L);
  State out = 0;
  std::size_t p = 1;
  for (int l = 0; l < L; ++l) {
    int d = in.digit(s, l);
    if (d >= K) throw DomainError("clean_index: state contains a mask token");
    out += static_cast<State>(d) * p;
    p *= static_cast<std::size_t>(K);
  }
  return out;
}

DataTable::DataTable(int K_, int L_, std::vector<double> p) : K(K_), L(L_), probs(std::move(p)) {
  if (K < 2 || L < 1) throw DomainError("DataTable: invalid K or L");
  if (probs.size() != ipow(static_cast<std::size_t>(K), L)) throw DomainError("DataTable: wrong length");
  double sum = 0.0;
  for (double v : probs) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("DataTable: negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DomainError("DataTable: probabilities do not sum to 1");
}

DataTable DataTable::from_any(int K, int L, const std::vector<double>& p) {
  std::size_t clean = ipow(static_cast<std::size_t>(K), L);
  if (p.size() == clean) return DataTable(K, L, p);
  if (p.size() != ipow(static_cast<std::size_t>(K + 1), L)) throw DomainError("DataTable: wrong length");
  Codec c(K + 1, L);
  std::vector<double> out(clean, 0.0);
  for (State s = 0; s < p.size(); ++s) {
    bool masked = false;
    for (int l = 0; l < L; ++l) masked = masked || c.digit(s, l) == K;
    if (masked) {
      if (p[s] != 0.0) throw DomainError("DataTable: mass on a state containing the mask token");
      continue;
    }
    out[clean_index(s, K, L, K + 1)] = p[s];
  }
  return DataTable(K, L, std::move(out));
}

DataTable DataTable::dirichlet(int K, int L, std::uint64_t seed, std::size_t cap) {
  std::size_t n = checked_pow(static_cast<std::size_t>(K), L, cap);
  std::mt19937_64 gen(seed);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    v = ex(gen);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  // Normalization residue goes to the largest entry so the table sums to 1 within rounding.
  double s2 = std::accumulate(p.begin(), p.end(), 0.0);
  *std::max_element(p.begin(), p.end()) += 1.0 - s2;
  return DataTable(K, L, std::move(p));
}

DataTable DataTable::point_mass(int K, int L, State x0) {
  std::vector<double> p(ipow(static_cast<std::size_t>(K), L), 0.0);
  if (x0 >= p.size()) throw DomainError("point_mass: state out of range");
  p[x0] = 1.0;
  return DataTable(K, L, std::move(p));
}

DataTable DataTable::uniform(int K, int L) {
  std::size_t n = ipow(static_cast<std::size_t>(K), L);
  return DataTable(K, L, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

std::vector<double> DataTable::embed(int V) const {
  if (V == K) return probs;
  Codec c(K, L), out(V, L);
  std::vector<double> r(out.size(), 0.0);
  for (State s = 0; s < probs.size(); ++s) {
    State t = 0;
    for (int l = 0; l < L; ++l) t += static_cast<State>(c.digit(s, l)) * out.stride(l);
    r[t] = probs[s];
  }
  return r;
}

double DataTable::entropy() const { return revdiff::entropy(probs); }

TimeGrid::TimeGrid(std::vector<double> t) : times(std::move(t)) {
  if (times.size() < 2) throw GridError("TimeGrid: need at least two points");
  if (times.front() != 0.0) throw GridError("TimeGrid: t0 must be 0");
  if (times.back() > 1.0) throw GridError("TimeGrid: tn must be <= 1");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw GridError("TimeGrid: times must be strictly increasing");
}

TimeGrid TimeGrid::uniform(int n, Terminal terminal, double eps_floor) {
  if (n < 1) throw GridError("TimeGrid: n must be >= 1");
  double end = terminal == Terminal::One ? 1.0 : 1.0 - eps_floor;
  std::vector<double> t(n + 1);
  for (int i = 0; i <= n; ++i) t[i] = end * static_cast<double>(i) / n;
  t[n] = end;
  return TimeGrid(std::move(t));
}

int TimeGrid::index_of(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] == t) return static_cast<int>(i);
  throw GridError("time " + std::to_string(t) + " is not a grid point");
}

double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Row softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : logits) m = std::max(m, x);
  Row out(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (auto& v : out) v /= s;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("kl_divergence: size mismatch");
  double r = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    r += p[i] * std::log(p[i] / q[i]);
  }
  return r;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

void check_simplex(std::span<const double> row, double tol) {
  double s = 0.0;
  for (double v : row) {
    if (!(v >= -tol) || !std::isfinite(v)) throw DomainError("row is not a simplex vector");
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw DomainError("row does not sum to 1");
}

int thread_count() {
  if (const char* env = std::getenv("REVDIFF_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1 : static_cast<int>(h);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body, std::size_t chunk) {
  if (n == 0) return;
  if (chunk == 0) chunk = std::max<std::size_t>(1, (n + 63) / 64);
  std::size_t chunks = (n + chunk - 1) / chunk;
  int threads = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), chunks);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t c = next.fetch_add(1);
        if (c >= chunks || failed.load()) return;
        try {
          body(c * chunk, std::min(n, (c + 1) * chunk));
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace revdiff
