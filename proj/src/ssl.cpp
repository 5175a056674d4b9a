#include "aggrank/ssl.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "aggrank/error.hpp"

namespace aggrank::ssl {

using nn::NodeId;
using nn::Tensor;
using nn::Vec;

SslParamIds init_ssl_params(nn::ParamStore& store, int alpha, int num_verticals, Rng& rng) {
  if (alpha < 1) throw ConfigError("embedding width must be positive");
  if (num_verticals < 1) throw ConfigError("need at least one vertical");
  std::size_t a = static_cast<std::size_t>(alpha);
  std::size_t classes = static_cast<std::size_t>(num_verticals) + 1;
  double bound = 1.0 / std::sqrt(static_cast<double>(alpha));
  SslParamIds ids;
  ids.inverse_w = store.add_uniform("ssl.inverse.w", Tensor::matrix(classes, 4 * a), bound, rng);
  ids.inverse_b = store.add_uniform("ssl.inverse.b", Tensor::vector(classes), bound, rng);
  ids.forward_w = store.add_uniform("ssl.forward.w", Tensor::matrix(2 * a, 3 * a), bound, rng);
  ids.forward_b = store.add_uniform("ssl.forward.b", Tensor::vector(2 * a), bound, rng);
  return ids;
}

SslParamIds resolve_ssl_params(const nn::ParamStore& store, int alpha, int num_verticals) {
  std::size_t a = static_cast<std::size_t>(alpha);
  std::size_t classes = static_cast<std::size_t>(num_verticals) + 1;
  SslParamIds ids;
  auto expect = [&](int id, std::size_t rows, std::size_t cols) {
    const Tensor& t = store.at(id);
    bool ok = cols == 0 ? (t.rank() == 1 && t.size() == rows)
                        : (t.rank() == 2 && t.rows() == rows && t.cols() == cols);
    if (!ok) {
      throw SchemaError("tensor " + store.name(id) + " has shape " + t.shape_string() +
                        ", incompatible with the dataset schema");
    }
  };
  ids.inverse_w = store.id("ssl.inverse.w");
  ids.inverse_b = store.id("ssl.inverse.b");
  ids.forward_w = store.id("ssl.forward.w");
  ids.forward_b = store.id("ssl.forward.b");
  expect(ids.inverse_w, classes, 4 * a);
  expect(ids.inverse_b, classes, 0);
  expect(ids.forward_w, 2 * a, 3 * a);
  expect(ids.forward_b, 2 * a, 0);
  return ids;
}

bool has_ssl_params(const nn::ParamStore& store) { return store.contains("ssl.inverse.w"); }

SslLossNodes add_episode_losses(env::Rollout& rollout, const SslParamIds& ids) {
  nn::Tape& tape = rollout.tape;
  SslLossNodes out;

  std::size_t steps = rollout.trace.steps.size();
  if (steps + 1 != rollout.state_nodes.size()) {
    throw ArgumentError("rollout state sequence does not match its steps");
  }

  std::vector<NodeId> inverse_terms;
  inverse_terms.reserve(steps);
  NodeId bias_i = tape.param_vector(ids.inverse_b);
  for (std::size_t t = 0; t < steps; ++t) {
    NodeId pair = tape.concat(rollout.state_nodes[t], rollout.state_nodes[t + 1]);
    NodeId logits = tape.add(tape.matvec(ids.inverse_w, pair), bias_i);
    NodeId lsm = tape.log_softmax(logits);
    std::size_t target = static_cast<std::size_t>(rollout.action_verticals[t]);
    if (target >= tape.value(logits).size()) {
      throw ArgumentError("placed vertical id exceeds the classifier's classes");
    }
    inverse_terms.push_back(tape.scale_const(tape.pick(lsm, target), -1.0));
  }
  if (inverse_terms.empty()) {
    out.inverse = tape.input(Vec{0.0});
  } else {
    std::vector<double> coeffs(inverse_terms.size(), 1.0 / static_cast<double>(steps));
    out.inverse = tape.weighted_sum(inverse_terms, coeffs);
  }

  std::vector<NodeId> forward_terms;
  NodeId bias_f = tape.param_vector(ids.forward_b);
  for (const env::Rollout::ModulePick& pick : rollout.module_picks) {
    if (pick.pseudo < 0) continue;
    NodeId h = rollout.state_nodes[pick.step];
    NodeId from_pseudo = tape.add(tape.matvec(ids.forward_w, tape.concat(h, pick.pseudo)), bias_f);
    NodeId from_content =
        tape.add(tape.matvec(ids.forward_w, tape.concat(h, pick.content)), bias_f);
    forward_terms.push_back(tape.squared_norm(tape.sub(from_pseudo, from_content)));
  }
  if (forward_terms.empty()) {
    out.forward = tape.input(Vec{0.0});
  } else {
    std::vector<double> coeffs(forward_terms.size(),
                               1.0 / static_cast<double>(forward_terms.size()));
    out.forward = tape.weighted_sum(forward_terms, coeffs);
  }
  return out;
}

Vec inverse_logits(const nn::ParamStore& store, const SslParamIds& ids, const Vec& h_t,
                   const Vec& h_next) {
  Vec pair = nn::concat(h_t, h_next);
  return nn::add(nn::matvec(store.at(ids.inverse_w), pair), store.at(ids.inverse_b).raw());
}

double inverse_loss(const nn::ParamStore& store, const SslParamIds& ids, const Vec& h_t,
                    const Vec& h_next, int target_vertical) {
  Vec lsm = nn::log_softmax(inverse_logits(store, ids, h_t, h_next));
  if (target_vertical < 0 || static_cast<std::size_t>(target_vertical) >= lsm.size()) {
    throw ArgumentError("target class out of range");
  }
  return -lsm[static_cast<std::size_t>(target_vertical)];
}

Vec forward_prediction(const nn::ParamStore& store, const SslParamIds& ids, const Vec& h_t,
                       const Vec& item) {
  Vec joined = nn::concat(h_t, item);
  return nn::add(nn::matvec(store.at(ids.forward_w), joined), store.at(ids.forward_b).raw());
}

double forward_loss(const nn::ParamStore& store, const SslParamIds& ids, const Vec& h_t,
                    const Vec& pseudo, const Vec& content) {
  Vec a = forward_prediction(store, ids, h_t, pseudo);
  Vec b = forward_prediction(store, ids, h_t, content);
  return nn::squared_norm(nn::sub(a, b));
}

}  // namespace aggrank::ssl
