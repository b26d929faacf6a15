#include <cmath>

#include "gasa/error.hpp"
#include "gasa/trainer.hpp"

namespace gasa {

double poly_lr(std::size_t epoch, std::size_t epoch_max, double lr0, double exponent) {
  if (epoch_max < 1 || epoch > epoch_max)
    throw Error(ErrorKind::InvalidEpoch, "epoch " + std::to_string(epoch) + " outside [0, " +
                                             std::to_string(epoch_max) + "]");
  const double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(epoch_max);
  return lr0 * std::pow(frac, exponent);
}

void sgd_nesterov_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                       double lr, double mu) {
  if (param.size() != velocity.size() || (!grad.empty() && grad.size() != param.size()))
    throw Error(ErrorKind::ShapeMismatch, "optimizer buffers do not match the parameter size");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    velocity[i] = mu * velocity[i] + g;
    param[i] -= lr * (g + mu * velocity[i]);
  }
}

void sgd_nesterov_step(const ParamList& params, std::vector<std::vector<double>>& velocity, double lr,
                       double mu) {
  if (velocity.size() != params.size())
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(params.size()) +
                                              " momentum buffers, got " + std::to_string(velocity.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    sgd_nesterov_step(t.mutable_values(), t.grad(), velocity[i], lr, mu);
  }
}

}  // namespace gasa
