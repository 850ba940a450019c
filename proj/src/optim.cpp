#include "codecforge/optim.hpp"

#include <cmath>

#include "codecforge/errors.hpp"

namespace codecforge {

void adam_step(std::span<Tensor> params, std::span<const std::string> names, AdamState& state,
               const AdamConfig& cfg) {
  if (names.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(names.size()) + " names");
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                         " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size()) {
      throw DimensionError("adam_step: state shape mismatch for " + names[i]);
    }
    for (const double g : params[i].grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + names[i]);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::span<const double> grad = params[i].grad();
    std::span<double> w = params[i].mutable_data();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      w[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

}  // namespace codecforge
