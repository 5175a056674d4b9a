#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aggrank/error.hpp"

namespace aggrank::nn {

// Dense row-major tensor of rank 1 or 2. Rank-0 is represented as a
// length-1 vector.
class Tensor {
 public:
  Tensor() = default;

  static Tensor vector(std::size_t len);
  static Tensor matrix(std::size_t rows, std::size_t cols);
  static Tensor scalar(double v);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  const std::vector<std::size_t>& shape() const { return shape_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

using Vec = std::vector<double>;

// Forward-only helpers for paths that never need gradients.
Vec matvec(const Tensor& w, const Vec& x);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec hadamard(const Vec& a, const Vec& b);
Vec sigmoid(const Vec& a);
Vec tanh_vec(const Vec& a);
Vec concat(const Vec& a, const Vec& b);
double dot(const Vec& a, const Vec& b);
double squared_norm(const Vec& a);

// Max-subtracted for stability. Empty input is an argument error.
Vec softmax(const Vec& scores);
Vec log_softmax(const Vec& scores);

}  // namespace aggrank::nn
