#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cflow {

/// PCG32 (XSH-RR 64/32). Every random draw in the toolkit comes from one of
/// these; `(seed, stream)` fully determines the output sequence.
class Pcg32 {
 public:
  struct State {
    std::uint64_t state = 0;
    std::uint64_t inc = 0;
    bool operator==(const State&) const = default;
  };

  explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

  std::uint32_t next_u32();

  /// One draw, uniform in [0, 1) with 32-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller; consumes two uniform draws.
  double normal();

  void fill_uniform(std::span<double> out);
  /// Box-Muller pairs; an odd tail consumes a full pair.
  void fill_normal(std::span<double> out);
  std::vector<double> uniform_vector(std::size_t n);

  /// Uniform integer in [0, bound), rejection-free via multiply-shift.
  std::uint32_t below(std::uint32_t bound);

  State state() const { return {state_, inc_}; }
  void set_state(const State& s) {
    state_ = s.state;
    inc_ = s.inc;
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

}  // namespace cflow
