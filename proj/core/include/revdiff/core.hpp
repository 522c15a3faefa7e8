#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace revdiff {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error {
  using Error::Error;
};
struct SupportError : Error {
  using Error::Error;
};
struct CapacityError : Error {
  using Error::Error;
};
struct OrderingError : Error {
  using Error::Error;
};
struct GridError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct UnsupportedConversionError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};
struct StepSizeError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

using State = std::uint64_t;
using Row = std::vector<double>;

inline constexpr std::size_t kStateCap = 65536;
inline constexpr std::size_t kLiftedCap = 1048576;

enum class ScheduleKind { Linear, Geometric };

// Geometric uses alpha(t) = delta^t with delta = 1e-6.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::Linear;
  double eps_floor = 1e-3;

  double alpha(double t) const;
  double alpha_prime(double t) const;
  double alpha_ratio(double s, double t) const;
  double beta(double t) const;
  void validate() const;
};

inline constexpr double kGeometricDelta = 1e-6;

enum class Family { UDM, MDM, AUDM, MaxCoupling };

struct ProcessSpec {
  int K = 2;
  int L = 1;
  Family family = Family::UDM;
  NoiseSchedule schedule{};

  // Tokens per position in the noisy space (MDM appends the mask at index K).
  int vocab() const { return family == Family::MDM ? K + 1 : K; }
  int mask() const { return K; }
  std::size_t num_states() const;
  std::size_t num_clean_states() const;
  // Reference distribution pi as a row over vocab().
  Row reference() const;
  void validate(std::size_t cap = kStateCap) const;
};

std::string family_name(Family f);
Family parse_family(const std::string& s);
std::string schedule_name(ScheduleKind k);
ScheduleKind parse_schedule(const std::string& s);

std::size_t ipow(std::size_t base, int exp);
// Returns base^exp or throws CapacityError when it exceeds cap.
std::size_t checked_pow(std::size_t base, int exp, std::size_t cap);

// Mixed-radix codec, position 0 least significant.
class Codec {
 public:
  Codec() = default;
  Codec(int radix, int length);

  int radix() const { return radix_; }
  int length() const { return length_; }
  std::size_t size() const { return size_; }
  std::size_t stride(int pos) const { return pow_[pos]; }

  int digit(State s, int pos) const { return static_cast<int>((s / pow_[pos]) % radix_); }
  State with_digit(State s, int pos, int value) const {
    return s + (static_cast<State>(value) - static_cast<State>(digit(s, pos))) * pow_[pos];
  }
  State encode(std::span<const int> tokens) const;
  std::vector<int> decode(State s) const;

 private:
  int radix_ = 0;
  int length_ = 0;
  std::size_t size_ = 0;
  std::vector<std::size_t> pow_;
};

State encode_state(std::span<const int> tokens, int radix);
std::vector<int> decode_state(State index, int radix, int length);

// State in the MDM space (radix K+1) without masks, re-encoded with radix K.
State clean_index(State s, int K, int L, int radix);

// p0 over the clean space V^L with |V| = K.
struct DataTable {
  int K = 2;
  int L = 1;
  std::vector<double> probs;

  DataTable() = default;
  DataTable(int K, int L, std::vector<double> probs);

  // Accepts either K^L entries or (K+1)^L entries with zero mass on masked states.
  static DataTable from_any(int K, int L, const std::vector<double>& probs);
  static DataTable dirichlet(int K, int L, std::uint64_t seed, std::size_t cap = kStateCap);
  static DataTable point_mass(int K, int L, State x0);
  static DataTable uniform(int K, int L);

  std::size_t size() const { return probs.size(); }
  // Embeds p0 into a space of radix V >= K.
  std::vector<double> embed(int V) const;
  double entropy() const;
};

enum class Terminal { One, Floor };

struct TimeGrid {
  std::vector<double> times;

  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> times);
  static TimeGrid uniform(int n, Terminal terminal = Terminal::One, double eps_floor = 1e-3);

  int n() const { return static_cast<int>(times.size()) - 1; }
  double t(int i) const { return times[i]; }
  // Exact lookup of a grid point, GridError otherwise.
  int index_of(double t) const;
};

// Numerics.
double logsumexp(std::span<const double> v);
Row softmax(std::span<const double> logits);
// KL(p || q) with 0 log 0 = 0, +inf when q vanishes on the support of p.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double entropy(std::span<const double> p);
void check_simplex(std::span<const double> row, double tol = 1e-10);

// Thread count from REVDIFF_THREADS (defaults to hardware concurrency).
int thread_count();
// Splits [0, n) into contiguous chunks; chunk boundaries do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t chunk = 0);

}  // namespace revdiff
