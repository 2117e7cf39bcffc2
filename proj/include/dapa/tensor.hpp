#pragma once

#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "dapa/common.hpp"

namespace dapa {

// Dense row-major tensor of doubles. Rank 1 (vectors) and rank 2 (matrices)
// cover everything this project computes; scalars are shape {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (int(values.size()) != count(shape))
      throw DimensionError("Tensor: values size does not match shape");
  }

  static int count(const std::vector<int>& s) {
    int n = 1;
    for (int d : s) {
      if (d < 0) throw DimensionError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    const int n = count(s);
    return Tensor(std::move(s), std::vector<double>(size_t(n), 0.0));
  }
  static Tensor full(std::vector<int> s, double v) {
    const int n = count(s);
    return Tensor(std::move(s), std::vector<double>(size_t(n), v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> v) {
    const int n = int(v.size());
    return Tensor({n}, std::move(v));
  }

  int size() const { return int(values.size()); }
  int rank() const { return int(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : shape[0]; }

  double& operator[](int i) { return values[size_t(i)]; }
  double operator[](int i) const { return values[size_t(i)]; }
  double& at(int r, int c) { return values[size_t(r) * shape[1] + c]; }
  double at(int r, int c) const { return values[size_t(r) * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
  }
};

}  // namespace dapa
