#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "star/tensor.hpp"

namespace star {

/// Mixes a parent seed with a component name ("data", "init", "shuffle", ...)
/// so each consumer gets an independent, reproducible stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

/// Deterministic generator. Only the engine comes from <random>; the
/// distributions are written out so streams match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n);
  void shuffle(std::vector<std::size_t>& items);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace star
