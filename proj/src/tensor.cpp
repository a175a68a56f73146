#include "sonamatch/tensor.hpp"

#include <cmath>

#include "sonamatch/errors.hpp"

namespace sonamatch {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.data.assign(product(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t;
  t.data.assign(product(shape), value);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (values.size() != product(shape)) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_string(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

std::size_t Tensor::numel() const { return data.size(); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

void require_rank(const Tensor& t, std::size_t rank, const std::string& what) {
  if (t.rank() != rank) {
    throw ShapeError(what + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(t.shape));
  }
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                   const std::string& what) {
  if (t.shape != shape) {
    throw ShapeError(what + ": expected shape " + shape_string(shape) +
                     ", got " + shape_string(t.shape));
  }
}

}  // namespace sonamatch
