#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mrnet {

// Error taxonomy. The CLI maps these onto its documented exit codes, so every
// failure raised by the library should use one of them.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/matrix dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration values (bad head count, kernel size, ...).
struct ConfigError : Error {
  using Error::Error;
};

// API misuse, e.g. backward on a non-scalar.
struct UsageError : Error {
  using Error::Error;
};

// Malformed text input (JSONL annotations, config files).
struct ParseError : Error {
  using Error::Error;
};

// Malformed binary input (MRNF feature files, MRNP checkpoints).
struct FormatError : Error {
  using Error::Error;
};

// Structurally valid input that violates a documented precondition.
struct InputError : Error {
  using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

// Deterministic RNG. std::mt19937_64 is fully specified by the standard; the
// value derivations below avoid the implementation-defined std::*_distribution
// classes so streams are bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
  // mapping exact and portable.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw UsageError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent seeds from (seed, index).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mrnet
