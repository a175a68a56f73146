#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sonamatch {

// Dense row-major tensor of doubles. Rank 3 is laid out [channel][row][col],
// rank 2 [row][col], rank 1 [i]. All layer code in this library works on
// these three ranks.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

  std::size_t rank() const { return shape.size(); }
  std::size_t numel() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t i, std::size_t j) {
    return data[i * shape[1] + j];
  }
  double at(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data[(c * shape[1] + i) * shape[2] + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data[(c * shape[1] + i) * shape[2] + j];
  }
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Throw ShapeError unless the tensor has the given rank / exact shape.
// `what` names the offending argument in the message.
void require_rank(const Tensor& t, std::size_t rank, const std::string& what);
void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const std::string& what);

}  // namespace sonamatch
