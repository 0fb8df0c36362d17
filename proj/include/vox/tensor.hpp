#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vox/error.hpp"

namespace vox {

// Dense row-major tensor of doubles. Rank 1 and 2 cover almost everything;
// conv1d weights use rank 3 {width, in_channels, out_channels}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), v(numel(shape), 0.0) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (numel(shape) != v.size()) throw ShapeMismatch("tensor data/shape size mismatch");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }
  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  std::size_t size() const { return v.size(); }
  std::size_t rank() const { return shape.size(); }
  // 2-D view: rank-1 tensors are treated as a single row.
  std::size_t rows() const { return rank() <= 1 ? 1 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }

  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_str(const std::vector<std::size_t>& s);
void check_finite(const Tensor& t, const std::string& context);

}  // namespace vox
