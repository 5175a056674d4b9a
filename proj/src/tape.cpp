#include "aggrank/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aggrank::nn {

Tape::Tape(const ParamStore* store) : store_(store) {
  if (store_ == nullptr) throw ArgumentError("tape requires a parameter store");
}

void Tape::check_alive() const {
  if (consumed_) throw ArgumentError("tape already consumed by backward()");
}

NodeId Tape::push(Node n) {
  check_alive();
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ArgumentError("node id out of range");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

const Vec& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar(NodeId id) const {
  const Vec& v = value(id);
  if (v.size() != 1) throw ShapeError("scalar() on vector node");
  return v[0];
}

NodeId Tape::input(Vec v) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::zeros(std::size_t len) {
  Node n;
  n.op = Op::kZeros;
  n.value.assign(len, 0.0);
  return push(std::move(n));
}

NodeId Tape::param_vector(int param_id) {
  const Tensor& t = store_->at(param_id);
  if (t.rank() != 1) throw ShapeError("param_vector: parameter is not rank-1");
  Node n;
  n.op = Op::kParamVec;
  n.param = param_id;
  n.value = t.raw();
  return push(std::move(n));
}

NodeId Tape::matvec(int param_id, NodeId x) {
  const Tensor& w = store_->at(param_id);
  Node n;
  n.op = Op::kMatVec;
  n.param = param_id;
  n.a = x;
  n.value = nn::matvec(w, val(x));
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = nn::add(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.value = nn::sub(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.value = nn::hadamard(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::one_minus(NodeId a) {
  Node n;
  n.op = Op::kOneMinus;
  n.a = a;
  n.value = val(a);
  for (double& v : n.value) v = 1.0 - v;
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a;
  n.value = nn::sigmoid(val(a));
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.value = nn::tanh_vec(val(a));
  return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  n.value = nn::concat(val(a), val(b));
  return push(std::move(n));
}

NodeId Tape::scale_const(NodeId a, double c) {
  Node n;
  n.op = Op::kScaleConst;
  n.a = a;
  n.cval = c;
  n.value = val(a);
  for (double& v : n.value) v *= c;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId v, NodeId s) {
  if (val(s).size() != 1) throw ShapeError("scale: scale factor must be a scalar node");
  Node n;
  n.op = Op::kScale;
  n.a = v;
  n.b = s;
  double f = val(s)[0];
  n.value = val(v);
  for (double& x : n.value) x *= f;
  return push(std::move(n));
}

NodeId Tape::dot(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  n.value = {nn::dot(val(a), val(b))};
  return push(std::move(n));
}

NodeId Tape::stack(std::span<const NodeId> scalars) {
  if (scalars.empty()) throw ArgumentError("stack: no inputs");
  Node n;
  n.op = Op::kStack;
  n.children.assign(scalars.begin(), scalars.end());
  n.value.reserve(scalars.size());
  for (NodeId c : scalars) {
    if (val(c).size() != 1) throw ShapeError("stack: inputs must be scalar nodes");
    n.value.push_back(val(c)[0]);
  }
  return push(std::move(n));
}

NodeId Tape::pick(NodeId v, std::size_t index) {
  if (index >= val(v).size()) throw ArgumentError("pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.a = v;
  n.index = index;
  n.value = {val(v)[index]};
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId scores) {
  Node n;
  n.op = Op::kSoftmax;
  n.a = scores;
  n.value = nn::softmax(val(scores));
  return push(std::move(n));
}

NodeId Tape::log_softmax(NodeId scores) {
  Node n;
  n.op = Op::kLogSoftmax;
  n.a = scores;
  n.value = nn::log_softmax(val(scores));
  return push(std::move(n));
}

NodeId Tape::squared_norm(NodeId v) {
  Node n;
  n.op = Op::kSquaredNorm;
  n.a = v;
  n.value = {nn::squared_norm(val(v))};
  return push(std::move(n));
}

NodeId Tape::weighted_vector_sum(NodeId weights, std::span<const NodeId> vectors) {
  const Vec& w = val(weights);
  if (w.size() != vectors.size()) throw ShapeError("weighted_vector_sum: arity mismatch");
  if (vectors.empty()) throw ArgumentError("weighted_vector_sum: no vectors");
  Node n;
  n.op = Op::kWeightedVecSum;
  n.a = weights;
  n.children.assign(vectors.begin(), vectors.end());
  n.value.assign(val(vectors[0]).size(), 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const Vec& v = val(vectors[k]);
    if (v.size() != n.value.size()) throw ShapeError("weighted_vector_sum: length mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) n.value[i] += w[k] * v[i];
  }
  return push(std::move(n));
}

NodeId Tape::weighted_sum(std::span<const NodeId> scalars, std::span<const double> coeffs) {
  if (scalars.size() != coeffs.size()) throw ShapeError("weighted_sum: arity mismatch");
  Node n;
  n.op = Op::kWeightedSum;
  n.children.assign(scalars.begin(), scalars.end());
  n.coeffs.assign(coeffs.begin(), coeffs.end());
  double acc = 0.0;
  for (std::size_t k = 0; k < n.children.size(); ++k) {
    if (val(n.children[k]).size() != 1) throw ShapeError("weighted_sum: inputs must be scalars");
    acc += n.coeffs[k] * val(n.children[k])[0];
  }
  n.value = {acc};
  return push(std::move(n));
}

void Tape::backward(NodeId root, Gradients& grads, double seed) {
  check_alive();
  if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size()) {
    throw ArgumentError("backward: root id out of range");
  }
  if (nodes_[static_cast<std::size_t>(root)].value.size() != 1) {
    throw ShapeError("backward: root must be a scalar node");
  }
  consumed_ = true;

  std::vector<Vec> adj(nodes_.size());
  auto bar = [&](NodeId id) -> Vec& {
    Vec& g = adj[static_cast<std::size_t>(id)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(id)].value.size(), 0.0);
    return g;
  };

  bar(root)[0] = seed;

  for (NodeId id = root; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Vec& g = adj[static_cast<std::size_t>(id)];
    if (g.empty()) continue;  // node does not influence root

    switch (n.op) {
      case Op::kInput:
      case Op::kZeros:
        break;

      case Op::kParamVec: {
        Tensor& pg = grads.at(n.param);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        break;
      }

      case Op::kMatVec: {
        const Tensor& w = store_->at(n.param);
        Tensor& wg = grads.at(n.param);
        const Vec& x = val(n.a);
        Vec& xg = bar(n.a);
        std::size_t rows = w.rows();
        std::size_t cols = w.cols();
        const double* wp = w.raw().data();
        double* wgp = wg.raw().data();
        for (std::size_t r = 0; r < rows; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          const double* wrow = wp + r * cols;
          double* wgrow = wgp + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            wgrow[c] += gr * x[c];
            xg[c] += gr * wrow[c];
          }
        }
        break;
      }

      case Op::kAdd: {
        Vec& ga = bar(n.a);
        Vec& gb = bar(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }

      case Op::kSub: {
        Vec& ga = bar(n.a);
        Vec& gb = bar(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }

      case Op::kHadamard: {
        const Vec& a = val(n.a);
        const Vec& b = val(n.b);
        Vec& ga = bar(n.a);
        Vec& gb = bar(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * b[i];
          gb[i] += g[i] * a[i];
        }
        break;
      }

      case Op::kOneMinus: {
        Vec& ga = bar(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        break;
      }

      case Op::kSigmoid: {
        Vec& ga = bar(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        }
        break;
      }

      case Op::kTanh: {
        Vec& ga = bar(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        }
        break;
      }

      case Op::kConcat: {
        Vec& ga = bar(n.a);
        Vec& gb = bar(n.b);
        std::size_t na = ga.size();
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        break;
      }

      case Op::kScaleConst: {
        Vec& ga = bar(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.cval * g[i];
        break;
      }

      case Op::kScale: {
        const Vec& v = val(n.a);
        double s = val(n.b)[0];
        Vec& gv = bar(n.a);
        Vec& gs = bar(n.b);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          gv[i] += s * g[i];
          acc += g[i] * v[i];
        }
        gs[0] += acc;
        break;
      }

      case Op::kDot: {
        const Vec& a = val(n.a);
        const Vec& b = val(n.b);
        Vec& ga = bar(n.a);
        Vec& gb = bar(n.b);
        double g0 = g[0];
        for (std::size_t i = 0; i < a.size(); ++i) {
          ga[i] += g0 * b[i];
          gb[i] += g0 * a[i];
        }
        break;
      }

      case Op::kStack: {
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          bar(n.children[k])[0] += g[k];
        }
        break;
      }

      case Op::kPick: {
        bar(n.a)[n.index] += g[0];
        break;
      }

      case Op::kSoftmax: {
        // d x_i = y_i (g_i - sum_j g_j y_j)
        Vec& ga = bar(n.a);
        double gy = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) gy += g[j] * n.value[j];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.value[i] * (g[i] - gy);
        break;
      }

      case Op::kLogSoftmax: {
        // d x_i = g_i - exp(y_i) sum_j g_j
        Vec& ga = bar(n.a);
        double gsum = 0.0;
        for (double gj : g) gsum += gj;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] - std::exp(n.value[i]) * gsum;
        }
        break;
      }

      case Op::kSquaredNorm: {
        const Vec& v = val(n.a);
        Vec& ga = bar(n.a);
        double g0 = g[0];
        for (std::size_t i = 0; i < v.size(); ++i) ga[i] += 2.0 * g0 * v[i];
        break;
      }

      case Op::kWeightedVecSum: {
        const Vec& w = val(n.a);
        Vec& gw = bar(n.a);
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          const Vec& v = val(n.children[k]);
          Vec& gv = bar(n.children[k]);
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) {
            gv[i] += w[k] * g[i];
            acc += g[i] * v[i];
          }
          gw[k] += acc;
        }
        break;
      }

      case Op::kWeightedSum: {
        double g0 = g[0];
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          bar(n.children[k])[0] += n.coeffs[k] * g0;
        }
        break;
      }
    }
  }
}

}  // namespace aggrank::nn
