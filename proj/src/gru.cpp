#include "aggrank/gru.hpp"

#include <cmath>

namespace aggrank::nn {

GruParamIds register_gru(ParamStore& store, const std::string& prefix, std::size_t alpha,
                         Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(alpha));
  auto mat = [&](const char* name) {
    return store.add_uniform(prefix + "." + name, Tensor::matrix(alpha, alpha), bound, rng);
  };
  GruParamIds ids;
  ids.w_u_x = mat("w_u_x");
  ids.w_u_s = mat("w_u_s");
  ids.w_r_x = mat("w_r_x");
  ids.w_r_s = mat("w_r_s");
  ids.w_x = mat("w_x");
  ids.w_s = mat("w_s");
  ids.w_q = mat("w_q");
  return ids;
}

GruParamIds resolve_gru(const ParamStore& store, const std::string& prefix) {
  GruParamIds ids;
  ids.w_u_x = store.id(prefix + ".w_u_x");
  ids.w_u_s = store.id(prefix + ".w_u_s");
  ids.w_r_x = store.id(prefix + ".w_r_x");
  ids.w_r_s = store.id(prefix + ".w_r_s");
  ids.w_x = store.id(prefix + ".w_x");
  ids.w_s = store.id(prefix + ".w_s");
  ids.w_q = store.id(prefix + ".w_q");
  return ids;
}

Vec gru_init_state(const ParamStore& store, const GruParamIds& ids, const Vec& query) {
  return sigmoid(matvec(store.at(ids.w_q), query));
}

GruStepValues gru_step(const ParamStore& store, const GruParamIds& ids, const Vec& x,
                       const Vec& o_prev) {
  GruStepValues s;
  s.update = sigmoid(add(matvec(store.at(ids.w_u_x), x), matvec(store.at(ids.w_u_s), o_prev)));
  s.reset = sigmoid(add(matvec(store.at(ids.w_r_x), x), matvec(store.at(ids.w_r_s), o_prev)));
  s.cell = tanh_vec(
      add(matvec(store.at(ids.w_x), x), matvec(store.at(ids.w_s), hadamard(s.reset, o_prev))));
  s.out.resize(o_prev.size());
  for (std::size_t i = 0; i < o_prev.size(); ++i) {
    s.out[i] = (1.0 - s.update[i]) * o_prev[i] + s.update[i] * s.cell[i];
  }
  return s;
}

Vec encode_state(const GruStepValues& step) { return concat(step.out, step.cell); }

Vec encode_initial_state(const Vec& o0) { return concat(o0, Vec(o0.size(), 0.0)); }

Vec encode_state_at(const Vec& o0, const std::vector<GruStepValues>& steps, std::size_t t) {
  if (t == 0) return encode_initial_state(o0);
  if (t > steps.size()) throw ArgumentError("encode_state_at: index past recorded steps");
  return encode_state(steps[t - 1]);
}

NodeId gru_init_state_node(Tape& tape, const GruParamIds& ids, NodeId query) {
  return tape.sigmoid(tape.matvec(ids.w_q, query));
}

GruStepNodes gru_step_node(Tape& tape, const GruParamIds& ids, NodeId x, NodeId o_prev) {
  GruStepNodes s;
  s.update = tape.sigmoid(tape.add(tape.matvec(ids.w_u_x, x), tape.matvec(ids.w_u_s, o_prev)));
  s.reset = tape.sigmoid(tape.add(tape.matvec(ids.w_r_x, x), tape.matvec(ids.w_r_s, o_prev)));
  s.cell = tape.tanh(
      tape.add(tape.matvec(ids.w_x, x), tape.matvec(ids.w_s, tape.hadamard(s.reset, o_prev))));
  s.out = tape.add(tape.hadamard(tape.one_minus(s.update), o_prev),
                   tape.hadamard(s.update, s.cell));
  return s;
}

NodeId encode_state_node(Tape& tape, const GruStepNodes& step) {
  return tape.concat(step.out, step.cell);
}

NodeId encode_initial_state_node(Tape& tape, NodeId o0, std::size_t alpha) {
  return tape.concat(o0, tape.zeros(alpha));
}

}  // namespace aggrank::nn
