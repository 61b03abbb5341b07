#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace retstat {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Derives a stream id from a stage name and a worker/stream index. The
/// mapping is fixed, so results never depend on how many threads run.
std::uint64_t stream_id(std::string_view stage, std::uint64_t index);

/// Counter-based generator: (seed, stream) select an independent sequence,
/// the position inside it is a plain block counter.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();
  std::uint32_t next_u32();
  /// Uniform on [0,1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Exp(1) by inversion.
  double exponential();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

}  // namespace retstat
