#pragma once

// Shared value types, the error taxonomy, seeded RNG plumbing, and the small
// dense-vector algebra the rest of the library is built on. Parameters are
// flat std::vector<double>; there is deliberately no matrix library here.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

using ParamVector = std::vector<double>;

// ---------------------------------------------------------------------------
// Error taxonomy. Validation problems (bad config / bad call / bad file) and
// runtime problems (numerics, infeasible partitions) are distinct branches so
// the CLI can map them to distinct exit codes.
// ---------------------------------------------------------------------------

// A caller broke a documented precondition.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A config value is missing, unknown, or out of range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An input file does not match its declared format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A partitioner could not satisfy its feasibility requirements.
class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model vector became unusable (here: zero norm, so cosine is undefined).
class DegenerateModelError : public std::runtime_error {
 public:
  DegenerateModelError(const std::string& what, int client_id)
      : std::runtime_error(what), client_id(client_id) {}
  int client_id;  // -1 when no client context is available
};

// Training produced a non-finite parameter or gradient entry.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int round, int client_id)
      : std::runtime_error(what), round(round), client_id(client_id) {}
  int round;
  int client_id;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

// ---------------------------------------------------------------------------
// Seeding. Every random decision in the library draws from an mt19937_64
// whose seed is derived by splitmix64 mixing from (base seed, stream tag,
// round, client, ...). Mixing instead of sharing one engine keeps results
// independent of evaluation order, which is what makes runs reproducible
// byte-for-byte regardless of how work is scheduled.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x8BADF00DDEADBEEFULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Stream tags; values are arbitrary but frozen (changing them changes runs).
enum class Stream : std::uint64_t {
  data = 101,
  partition = 102,
  init = 103,
  participation = 104,
  batch = 105,
  subsample = 106,
};

inline std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> parts) {
  return std::mt19937_64(mix_seed(parts));
}

// ---------------------------------------------------------------------------
// Vector algebra.
// ---------------------------------------------------------------------------

inline double dot(const ParamVector& a, const ParamVector& b) {
  require(a.size() == b.size(), "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const ParamVector& a) { return dot(a, a); }

inline double norm(const ParamVector& a) { return std::sqrt(squared_norm(a)); }

// y += a * x
inline void axpy(double a, const ParamVector& x, ParamVector& y) {
  require(x.size() == y.size(), "axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline ParamVector sub(const ParamVector& a, const ParamVector& b) {
  require(a.size() == b.size(), "sub: size mismatch");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline double squared_distance(const ParamVector& a, const ParamVector& b) {
  require(a.size() == b.size(), "squared_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline bool all_finite(const ParamVector& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

// Frobenius norm of a stack of per-client vectors.
inline double stacked_norm(const std::vector<ParamVector>& ws) {
  double s = 0.0;
  for (const auto& w : ws) s += squared_norm(w);
  return std::sqrt(s);
}

inline double stacked_squared_distance(const std::vector<ParamVector>& a,
                                       const std::vector<ParamVector>& b) {
  require(a.size() == b.size(), "stacked_squared_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += squared_distance(a[i], b[i]);
  return s;
}

}  // namespace fedsim
