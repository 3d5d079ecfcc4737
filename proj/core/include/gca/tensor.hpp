#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gca/error.hpp"

namespace gca {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor of doubles. Plain value type: no tape attached,
// freely copyable and sendable across threads. Gradients live on the tape,
// not here.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(numel(shape), 0.0) {}
  Tensor(Shape s, double fill) : shape(std::move(s)), v(numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != numel(shape))
      throw ConfigError("tensor: " + std::to_string(v.size()) + " values for shape " + shape_str(shape));
  }

  static Tensor scalar(double x) { return Tensor(Shape{1}, std::vector<double>{x}); }

  // Value of a single-element tensor.
  double scalar() const {
    if (v.size() != 1) throw ConfigError("tensor: scalar() on shape " + shape_str(shape));
    return v[0];
  }

  std::size_t size() const { return v.size(); }

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  // 2-D accessors; row-major.
  double& at(std::size_t r, std::size_t c) { return v[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace gca
