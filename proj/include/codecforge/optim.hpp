#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "codecforge/tensor.hpp"

namespace codecforge {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // one moment vector per parameter
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of every parameter from its gradient (a
// parameter without a gradient counts as zero). Throws NumericError naming
// the first parameter whose gradient is not finite, before anything changes.
void adam_step(std::span<Tensor> params, std::span<const std::string> names, AdamState& state,
               const AdamConfig& cfg);

}  // namespace codecforge
