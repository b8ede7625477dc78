// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "optformer/error.hpp"

namespace optformer {

// Dense row-major tensor of 64-bit floats. This is the only numeric
// container in the library; shapes are small enough that value semantics
// (copy on assignment) keep everything simple and deterministic.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
      throw ShapeError("Tensor: data length does not match shape product");
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw ShapeError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    std::int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }
  static Tensor full(std::vector<int> s, double v) {
    std::int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
  }
  static Tensor ones(std::vector<int> s) { return full(std::move(s), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i) * n + i] = 1.0;
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  // 2-D accessors; callers guarantee rank()==2.
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace optformer
