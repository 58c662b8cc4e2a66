#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace nnmut {

/// Counter-based, splittable random generator.
///
/// The n-th draw of a stream is a pure function of (key, n): the SplitMix64
/// finalizer applied to key + n * golden_gamma. Child streams are derived with
/// split(), so independent consumers never share state and results do not
/// depend on evaluation order or thread count.
///
/// All distributions are implemented here rather than taken from <random>,
/// whose distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  [[nodiscard]] Rng split(std::uint64_t stream) const;
  [[nodiscard]] Rng split(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per call, no cached spare).
  double normal();

  /// k distinct indices from [0, n) in selection order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
  /// Uniformly random permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  [[nodiscard]] std::uint64_t key() const { return key_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  Rng(std::uint64_t key, int /*raw*/) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace nnmut
