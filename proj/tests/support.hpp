#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <random>
#include <vector>

#include "codecforge/tensor.hpp"

namespace testing {

inline codecforge::Tensor random_tensor(codecforge::Shape shape, std::uint64_t seed,
                                        double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> values(codecforge::shape_numel(shape));
  for (double& v : values) v = u(rng);
  return codecforge::Tensor(std::move(shape), std::move(values));
}

// Values bounded away from zero so relu/abs kinks stay outside any h-step.
inline codecforge::Tensor random_tensor_no_kinks(codecforge::Shape shape, std::uint64_t seed) {
  auto t = random_tensor(std::move(shape), seed);
  for (double& v : t.mutable_data()) v += v >= 0.0 ? 0.05 : -0.05;
  return t;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace testing
