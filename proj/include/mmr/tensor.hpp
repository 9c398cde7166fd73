#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmr {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Dense row-major float32 array with an optional gradient buffer.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  std::optional<std::vector<float>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);
  // Throws DimensionError unless volume(s) == values.size().
  Tensor(Shape s, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{1}, std::vector<float>{v}); }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t ndim() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  float& operator[](std::size_t i) { return data[i]; }
  float operator[](std::size_t i) const { return data[i]; }

  std::span<float> values() noexcept { return data; }
  std::span<const float> values() const noexcept { return data; }

  std::vector<float>& ensure_grad();
  void zero_grad();

  bool all_finite() const noexcept;

  // Value equality; gradient buffers are ignored.
  friend bool operator==(const Tensor& a, const Tensor& b) noexcept {
    return a.shape == b.shape && a.data == b.data;
  }
};

}  // namespace mmr
