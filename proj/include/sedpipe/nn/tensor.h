#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace sed::nn {

/// Dense row-major array of doubles. Layers agree on axis meaning:
/// (batch, time, freq, channel) in the convolutional block and
/// (batch, time, feature) after flattening.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  /// Product of all dims except the last.
  std::size_t rows() const;
  std::size_t last() const { return shape.empty() ? 0 : shape.back(); }

  void fill(double v);
  std::string shape_string() const;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

}  // namespace sed::nn
