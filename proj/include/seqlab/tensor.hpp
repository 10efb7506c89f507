#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqlab {

// Dense row-major tensor of doubles, rank 1 or 2. Double precision throughout:
// the gradient checks are unreliable in single precision.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.data.assign(numel_of(s), 0.0);
    t.shape = std::move(s);
    return t;
  }

  static Tensor full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  static Tensor vec(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
  }

  static Tensor mat(int r, int c, std::vector<double> v) {
    if (v.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c))
      throw std::runtime_error("Tensor::mat: data size does not match " + std::to_string(r) + "x" +
                               std::to_string(c));
    Tensor t;
    t.shape = {r, c};
    t.data = std::move(v);
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const { return data.size(); }
  int rows() const { return shape.at(0); }
  int cols() const { return rank() == 2 ? shape.at(1) : 1; }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  const double* row_ptr(int i) const { return data.data() + static_cast<std::size_t>(i) * shape[1]; }
  double* row_ptr(int i) { return data.data() + static_cast<std::size_t>(i) * shape[1]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace seqlab
