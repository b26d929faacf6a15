#pragma once

#include <string>
#include <vector>

#include "gasa/rng.hpp"
#include "gasa/tensor.hpp"

namespace gasa {

/// A learnable tensor handle with a stable registry name. Copies share storage
/// with the owning model, so optimizer updates through the handle are visible
/// to the model.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

std::size_t count_scalars(const ParamList& params);

/// Leaf tensor initialised uniform(-bound, bound), bound = 1/sqrt(fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace gasa
