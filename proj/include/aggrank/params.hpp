#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "aggrank/rng.hpp"
#include "aggrank/tensor.hpp"

namespace aggrank::nn {

// Ordered collection of named parameter tensors. Insertion order is the
// canonical order for initialization draws, serialization, and gradient
// accumulation, which keeps whole-model runs bit-reproducible.
class ParamStore {
 public:
  int add(const std::string& name, Tensor t);
  int add_uniform(const std::string& name, Tensor shape_like, double bound, Rng& rng);

  bool contains(const std::string& name) const;
  int id(const std::string& name) const;  // throws ArgumentError if absent

  Tensor& at(int id);
  const Tensor& at(int id) const;
  Tensor& at(const std::string& name) { return at(id(name)); }
  const Tensor& at(const std::string& name) const { return at(id(name)); }

  const std::string& name(int id) const;
  int count() const { return static_cast<int>(items_.size()); }

  std::size_t total_size() const;
  bool all_finite() const;

  // Versioned JSON container of named tensors with shapes.
  std::string to_json() const;
  static ParamStore from_json(const std::string& text);
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  struct Item {
    std::string name;
    Tensor tensor;
  };
  std::vector<Item> items_;
  std::unordered_map<std::string, int> index_;
};

// Per-parameter gradient buffers aligned with a ParamStore by id.
class Gradients {
 public:
  explicit Gradients(const ParamStore& store);

  Tensor& at(int id) { return grads_[static_cast<std::size_t>(id)]; }
  const Tensor& at(int id) const { return grads_[static_cast<std::size_t>(id)]; }
  int count() const { return static_cast<int>(grads_.size()); }

  void zero();
  void add_scaled(const Gradients& other, double c);
  void scale(double c);
  double squared_norm() const;
  bool all_finite() const;

 private:
  std::vector<Tensor> grads_;
};

}  // namespace aggrank::nn
