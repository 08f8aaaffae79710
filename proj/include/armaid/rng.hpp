#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace armaid {

/// Seedable random stream. Sub-streams are derived from the construction seed
/// (not from the current engine state), so the stream a caller gets for a
/// given (name, index) does not depend on how many draws happened before.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  [[nodiscard]] Rng substream(std::string_view name, std::uint64_t index = 0) const;

  double normal();
  double uniform();
  /// Uniform on {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Student t with 2 degrees of freedom, as normal / sqrt(chi2_2 / 2).
  double student_t2();

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name, std::uint64_t index);

}  // namespace armaid
