#pragma once

#include <functional>
#include <span>
#include <vector>

#include "aggrank/corpus.hpp"
#include "aggrank/gru.hpp"
#include "aggrank/params.hpp"
#include "aggrank/tape.hpp"

namespace aggrank::policy {

enum class GruMode { kUni, kDual };

struct PolicyConfig {
  int alpha = 32;
  GruMode gru_mode = GruMode::kUni;
};

struct VerticalParamIds {
  int v_proj = -1;  // alpha x raw_dim content projection
  int w_q = -1;     // attention query weights
  int w_c = -1;     // attention context weights
  int b = -1;       // attention bias, length-1 tensor
};

struct PolicyParamIds {
  nn::GruParamIds gru;      // ranking-state encoder
  nn::GruParamIds gru_ctx;  // context encoder; identical ids in uni mode
  bool dual = false;
  int u_p = -1;  // alpha x 2*alpha bilinear scoring map
  std::vector<VerticalParamIds> verticals;  // index = vertical_id - 1
};

// Registers gru.*, [gru_ctx.*,] U_p, V.<vid>, attn.<vid>.{w_q,w_c,b} in a
// fixed order, all uniform(-1/sqrt(alpha), 1/sqrt(alpha)).
PolicyParamIds init_policy_params(nn::ParamStore& store, const corpus::DatasetSchema& schema,
                                  const PolicyConfig& config, Rng& rng);

// Rebinds ids against a loaded checkpoint; verifies shapes against the
// schema and detects uni vs dual from the stored tensor names.
PolicyParamIds resolve_policy_params(const nn::ParamStore& store,
                                     const corpus::DatasetSchema& schema);

// Greedy self-ranking of the blue links under the current parameters:
// the partial context is encoded with the ranking GRU and candidates are
// scored bilinearly, argmax with ties broken by lowest doc_id. Returns
// blue-link indices in context order, min(t_c, #links) long.
std::vector<int> rank_context(const corpus::QueryRecord& query, const nn::ParamStore& store,
                              const PolicyParamIds& ids, int t_c);

// Orders blue links by an external score, descending, ties by doc_id.
std::vector<int> rank_blue_links_by(const corpus::QueryRecord& query,
                                    const std::function<double(const corpus::BlueLink&)>& score,
                                    int t_c);

// Per-episode differentiable artifacts: context encoding, attention
// readouts, module embeddings, and candidate embedding nodes. Pseudo
// modules are built once here and reused at every step.
struct EpisodeSetup {
  nn::NodeId query = -1;
  nn::NodeId o0 = -1;  // sigmoid(W_q q)
  nn::NodeId h0 = -1;  // [o0, 0]
  std::vector<int> context;                 // blue-link indices in context order
  std::vector<nn::NodeId> context_out;      // recurrent output per context position
  std::vector<nn::NodeId> blue_embeds;      // one per blue link
  std::vector<nn::NodeId> module_embeds;    // one per module: pseudo + content
  std::vector<nn::NodeId> module_pseudo;    // -1 when built without context
  std::vector<nn::NodeId> module_content;   // V_v m
  std::vector<std::vector<double>> module_attention;  // weights, empty without context
};

EpisodeSetup build_episode_setup(nn::Tape& tape, const corpus::QueryRecord& query,
                                 const PolicyParamIds& ids, const std::vector<int>& context,
                                 bool use_context);

struct ActionDistribution {
  nn::NodeId scores = -1;     // stacked candidate scores
  nn::NodeId log_probs = -1;  // log softmax over the stack
  std::vector<double> probs;  // softmax values, aligned with the candidates
};

// Joint softmax over whatever candidates remain, modules and blue links
// scored through the same bilinear map.
ActionDistribution action_distribution(nn::Tape& tape, const PolicyParamIds& ids, nn::NodeId h,
                                       std::span<const nn::NodeId> candidate_embeds);

// Forward-only mirrors of the per-piece operations, used by inference
// paths and by tests that probe values directly.
std::vector<nn::Vec> encode_context(const nn::ParamStore& store, const PolicyParamIds& ids,
                                    const corpus::QueryRecord& query,
                                    const std::vector<int>& context);
std::vector<double> attention_energies(const nn::ParamStore& store, const PolicyParamIds& ids,
                                       int vertical_id, const nn::Vec& query,
                                       const std::vector<nn::Vec>& context_outs);
nn::Vec pseudo_module(const std::vector<double>& weights,
                      const std::vector<nn::Vec>& context_outs);
nn::Vec module_embedding(const nn::ParamStore& store, const PolicyParamIds& ids, int vertical_id,
                         const nn::Vec& pseudo, const std::vector<double>& raw_features);
std::vector<double> action_probabilities(const nn::ParamStore& store, const PolicyParamIds& ids,
                                         const nn::Vec& h, const std::vector<nn::Vec>& embeddings);

}  // namespace aggrank::policy
