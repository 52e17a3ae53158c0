#include "cflow/numerics/rng.hpp"

#include <cmath>
#include <numbers>

namespace cflow {

Pcg32::Pcg32(std::uint64_t seed, std::uint64_t stream) {
  inc_ = (stream << 1u) | 1u;
  state_ = 0;
  next_u32();
  state_ += seed;
  next_u32();
}

std::uint32_t Pcg32::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

double Pcg32::uniform() { return next_u32() * 0x1.0p-32; }

double Pcg32::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  // 1 - u1 lies in (0, 1], so the log is finite.
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Pcg32::fill_uniform(std::span<double> out) {
  for (auto& v : out) v = uniform();
}

void Pcg32::fill_normal(std::span<double> out) {
  std::size_t i = 0;
  for (; i + 1 < out.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    out[i] = r * std::cos(theta);
    out[i + 1] = r * std::sin(theta);
  }
  if (i < out.size()) out[i] = normal();
}

std::vector<double> Pcg32::uniform_vector(std::size_t n) {
  std::vector<double> v(n);
  fill_uniform(v);
  return v;
}

std::uint32_t Pcg32::below(std::uint32_t bound) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * bound) >> 32u);
}

}  // namespace cflow
