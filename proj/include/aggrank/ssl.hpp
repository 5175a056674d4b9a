#pragma once

#include "aggrank/env.hpp"
#include "aggrank/params.hpp"
#include "aggrank/tape.hpp"
#include "aggrank/tensor.hpp"

namespace aggrank::ssl {

// Two auxiliary heads over the episode's state encodings. The inverse head
// classifies which kind of item was placed between consecutive states; the
// forward head predicts the next state from the current one plus an item
// embedding, once from the attention readout and once from the projected
// raw features, and penalizes disagreement between the two predictions.
struct SslParamIds {
  int inverse_w = -1;  // (J+1) x 4*alpha
  int inverse_b = -1;  // J+1
  int forward_w = -1;  // 2*alpha x 3*alpha
  int forward_b = -1;  // 2*alpha
};

SslParamIds init_ssl_params(nn::ParamStore& store, int alpha, int num_verticals, Rng& rng);
SslParamIds resolve_ssl_params(const nn::ParamStore& store, int alpha, int num_verticals);
bool has_ssl_params(const nn::ParamStore& store);

struct SslLossNodes {
  nn::NodeId inverse = -1;  // mean step classification cross-entropy
  nn::NodeId forward = -1;  // mean prediction disagreement over module picks
};

// Appends both losses to the rollout's tape. The inverse loss averages over
// every placement step; the forward loss averages over module placements
// that carry an attention readout and is a constant zero otherwise.
SslLossNodes add_episode_losses(env::Rollout& rollout, const SslParamIds& ids);

// Forward-only mirrors.
nn::Vec inverse_logits(const nn::ParamStore& store, const SslParamIds& ids, const nn::Vec& h_t,
                       const nn::Vec& h_next);
double inverse_loss(const nn::ParamStore& store, const SslParamIds& ids, const nn::Vec& h_t,
                    const nn::Vec& h_next, int target_vertical);
nn::Vec forward_prediction(const nn::ParamStore& store, const SslParamIds& ids,
                           const nn::Vec& h_t, const nn::Vec& item);
double forward_loss(const nn::ParamStore& store, const SslParamIds& ids, const nn::Vec& h_t,
                    const nn::Vec& pseudo, const nn::Vec& content);

}  // namespace aggrank::ssl
