#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace ada {

// Seeded generator whose derived draws are identical across standard library
// implementations. std::*_distribution output is implementation-defined, so
// uniform, normal and shuffle are computed here from raw mt19937_64 words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from (seed, stream id).
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ada
