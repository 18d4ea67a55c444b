#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sanas {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// ConfigError/InputError -> 2, IoError -> 3, NumericError -> 4, FormatError -> 5.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. mt19937_64 has a standardized output sequence, and all
// double conversions are done by hand so streams are bit-identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; second value cached.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Plain rejection-free modulo would be biased;
  // use rejection sampling so the draw is exact.
  std::uint64_t below(std::uint64_t n);

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    if (have_spare_) os << " s " << spare_bits();
    return os.str();
  }

  void set_state(const std::string& s);

 private:
  std::uint64_t spare_bits() const;

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64, used to derive independent stream seeds from (seed, indices).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(a)) ^ splitmix64(b ^ 0x5bf03635ull));
}

// FNV-1a 64-bit, used for dataset splits, config hashes and payload checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(std::uint64_t v);

// Runs fn(i) for i in [0, n). With more than one thread the work is split in
// contiguous chunks; callers must keep per-index outputs so results do not
// depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Thread-count resolution: explicit flag > SANAS_THREADS env > config value >
// hardware concurrency.
int resolve_threads(int flag_value, int config_value);

}  // namespace sanas
