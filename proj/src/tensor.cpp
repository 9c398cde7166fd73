#include "mmr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mmr/errors.hpp"

namespace mmr {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape s, float fill)
    : shape(std::move(s)), data(shape_volume(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<float> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (shape_volume(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_volume(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
}

std::vector<float>& Tensor::ensure_grad() {
  if (!grad || grad->size() != data.size()) grad.emplace(data.size(), 0.0f);
  return *grad;
}

void Tensor::zero_grad() {
  auto& g = ensure_grad();
  std::fill(g.begin(), g.end(), 0.0f);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(),
                     [](float v) { return std::isfinite(v); });
}

}  // namespace mmr
