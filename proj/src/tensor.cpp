#include "aggrank/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace aggrank::nn {

Tensor Tensor::vector(std::size_t len) {
  Tensor t;
  t.shape_ = {len};
  t.data_.assign(len, 0.0);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) {
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_.assign(rows * cols, 0.0);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t = vector(1);
  t.data_[0] = v;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (shape.empty() || shape.size() > 2 || n != data.size()) {
    throw ShapeError("tensor shape does not match payload size");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix tensor");
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

Vec matvec(const Tensor& w, const Vec& x) {
  if (w.rank() != 2 || w.cols() != x.size()) {
    throw ShapeError("matvec: matrix " + w.shape_string() + " against vector of length " +
                     std::to_string(x.size()));
  }
  Vec y(w.rows(), 0.0);
  const double* row = w.raw().data();
  for (std::size_t r = 0; r < w.rows(); ++r, row += w.cols()) {
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

namespace {
void require_same(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) throw ShapeError(std::string(op) + ": length mismatch");
}
}  // namespace

Vec add(const Vec& a, const Vec& b) {
  require_same(a, b, "add");
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

Vec sub(const Vec& a, const Vec& b) {
  require_same(a, b, "sub");
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
  return y;
}

Vec hadamard(const Vec& a, const Vec& b) {
  require_same(a, b, "hadamard");
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

Vec sigmoid(const Vec& a) {
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-a[i]));
  return y;
}

Vec tanh_vec(const Vec& a) {
  Vec y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = std::tanh(a[i]);
  return y;
}

Vec concat(const Vec& a, const Vec& b) {
  Vec y;
  y.reserve(a.size() + b.size());
  y.insert(y.end(), a.begin(), a.end());
  y.insert(y.end(), b.begin(), b.end());
  return y;
}

double dot(const Vec& a, const Vec& b) {
  require_same(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Vec& a) { return dot(a, a); }

Vec log_softmax(const Vec& scores) {
  if (scores.empty()) throw ArgumentError("log_softmax: empty input");
  double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - m);
  double lse = m + std::log(z);
  Vec y(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) y[i] = scores[i] - lse;
  return y;
}

Vec softmax(const Vec& scores) {
  // computed directly rather than as exp(log_softmax): the subtraction of
  // lse loses ulp(max) of absolute precision at large score magnitudes
  if (scores.empty()) throw ArgumentError("softmax: empty input");
  double m = *std::max_element(scores.begin(), scores.end());
  Vec y(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    y[i] = std::exp(scores[i] - m);
    z += y[i];
  }
  for (double& v : y) v /= z;
  return y;
}

}  // namespace aggrank::nn
