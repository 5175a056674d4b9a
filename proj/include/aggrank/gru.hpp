#pragma once

#include <string>
#include <vector>

#include "aggrank/params.hpp"
#include "aggrank/tape.hpp"
#include "aggrank/tensor.hpp"

namespace aggrank::nn {

// Ids of the seven square recurrence matrices. The cell has no bias terms;
// the initial state is produced from the query alone.
struct GruParamIds {
  int w_u_x = -1;  // update gate, input side
  int w_u_s = -1;  // update gate, state side
  int w_r_x = -1;  // reset gate, input side
  int w_r_s = -1;  // reset gate, state side
  int w_x = -1;    // candidate cell, input side
  int w_s = -1;    // candidate cell, gated state side
  int w_q = -1;    // query-to-initial-state map
};

// Registers alpha x alpha matrices under "<prefix>.w_*", initialized
// uniform(-1/sqrt(alpha), 1/sqrt(alpha)).
GruParamIds register_gru(ParamStore& store, const std::string& prefix, std::size_t alpha,
                         Rng& rng);

// Resolves previously registered ids by name, e.g. after a checkpoint load.
GruParamIds resolve_gru(const ParamStore& store, const std::string& prefix);

struct GruStepValues {
  Vec update;  // u_t
  Vec reset;   // r_t
  Vec cell;    // candidate state s_t
  Vec out;     // o_t
};

// o_0 = sigmoid(W_q q)
Vec gru_init_state(const ParamStore& store, const GruParamIds& ids, const Vec& query);

// u = sig(Wux x + Wus o); r = sig(Wrx x + Wrs o);
// cell = tanh(Wx x + Ws (r*o)); out = (1-u)*o + u*cell
GruStepValues gru_step(const ParamStore& store, const GruParamIds& ids, const Vec& x,
                       const Vec& o_prev);

// State encoding h_t = [out_t, cell_t]; at t = 0 the cell half is zero.
Vec encode_state(const GruStepValues& step);
Vec encode_initial_state(const Vec& o0);
// Encoding at position t of a recorded step sequence; t = 0 is the
// pre-sequence state built from o0.
Vec encode_state_at(const Vec& o0, const std::vector<GruStepValues>& steps, std::size_t t);

// Tape-based equivalents used on differentiable paths.
NodeId gru_init_state_node(Tape& tape, const GruParamIds& ids, NodeId query);

struct GruStepNodes {
  NodeId update = -1;
  NodeId reset = -1;
  NodeId cell = -1;
  NodeId out = -1;
};

GruStepNodes gru_step_node(Tape& tape, const GruParamIds& ids, NodeId x, NodeId o_prev);
NodeId encode_state_node(Tape& tape, const GruStepNodes& step);
NodeId encode_initial_state_node(Tape& tape, NodeId o0, std::size_t alpha);

}  // namespace aggrank::nn
