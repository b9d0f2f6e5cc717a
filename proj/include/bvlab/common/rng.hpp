#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace bvlab {

// Counter-based generator: draw i of a stream with key k is
// splitmix64_mix(k + i * 0x9e3779b97f4a7c15). The key is derived from
// (seed, stream) so independent streams can be split off without
// consuming draws from the parent.
//
// All distribution transforms are implemented here rather than taken from
// <random>, whose distributions are implementation-defined; results are
// therefore identical across standard libraries.
class CounterRng {
 public:
  static constexpr std::string_view kName = "splitmix64-counter/v1";

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; pairs are generated together.
  double normal();

  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);

  // Child stream; does not advance this generator.
  CounterRng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace bvlab
