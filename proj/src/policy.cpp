#include "aggrank/policy.hpp"

#include <algorithm>
#include <cmath>

#include "aggrank/error.hpp"

namespace aggrank::policy {

using nn::NodeId;
using nn::Tensor;
using nn::Vec;

PolicyParamIds init_policy_params(nn::ParamStore& store, const corpus::DatasetSchema& schema,
                                  const PolicyConfig& config, Rng& rng) {
  if (config.alpha != schema.alpha) {
    throw ConfigError("policy alpha " + std::to_string(config.alpha) +
                      " does not match schema alpha " + std::to_string(schema.alpha));
  }
  std::size_t alpha = static_cast<std::size_t>(config.alpha);
  double bound = 1.0 / std::sqrt(static_cast<double>(alpha));

  PolicyParamIds ids;
  ids.gru = nn::register_gru(store, "gru", alpha, rng);
  ids.dual = config.gru_mode == GruMode::kDual;
  ids.gru_ctx = ids.dual ? nn::register_gru(store, "gru_ctx", alpha, rng) : ids.gru;
  ids.u_p = store.add_uniform("U_p", Tensor::matrix(alpha, 2 * alpha), bound, rng);
  for (const corpus::VerticalSchema& v : schema.verticals) {
    std::string vid = std::to_string(v.vertical_id);
    VerticalParamIds vp;
    vp.v_proj = store.add_uniform("V." + vid,
                                  Tensor::matrix(alpha, static_cast<std::size_t>(v.raw_dim)),
                                  bound, rng);
    vp.w_q = store.add_uniform("attn." + vid + ".w_q", Tensor::vector(alpha), bound, rng);
    vp.w_c = store.add_uniform("attn." + vid + ".w_c", Tensor::vector(alpha), bound, rng);
    vp.b = store.add_uniform("attn." + vid + ".b", Tensor::vector(1), bound, rng);
    ids.verticals.push_back(vp);
  }
  return ids;
}

PolicyParamIds resolve_policy_params(const nn::ParamStore& store,
                                     const corpus::DatasetSchema& schema) {
  PolicyParamIds ids;
  ids.gru = nn::resolve_gru(store, "gru");
  ids.dual = store.contains("gru_ctx.w_u_x");
  ids.gru_ctx = ids.dual ? nn::resolve_gru(store, "gru_ctx") : ids.gru;
  ids.u_p = store.id("U_p");

  std::size_t alpha = static_cast<std::size_t>(schema.alpha);
  auto expect = [&](int id, std::size_t rows, std::size_t cols, const std::string& what) {
    const Tensor& t = store.at(id);
    if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
      throw SchemaError("checkpoint tensor " + what + " has shape " + t.shape_string() +
                        ", expected [" + std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
  };
  auto expect_vec = [&](int id, std::size_t len, const std::string& what) {
    const Tensor& t = store.at(id);
    if (t.rank() != 1 || t.size() != len) {
      throw SchemaError("checkpoint tensor " + what + " has shape " + t.shape_string() +
                        ", expected [" + std::to_string(len) + "]");
    }
  };
  auto expect_gru = [&](const nn::GruParamIds& g) {
    for (int id : {g.w_u_x, g.w_u_s, g.w_r_x, g.w_r_s, g.w_x, g.w_s, g.w_q}) {
      expect(id, alpha, alpha, store.name(id));
    }
  };
  expect_gru(ids.gru);
  if (ids.dual) expect_gru(ids.gru_ctx);
  expect(ids.u_p, alpha, 2 * alpha, "U_p");

  for (const corpus::VerticalSchema& v : schema.verticals) {
    std::string vid = std::to_string(v.vertical_id);
    VerticalParamIds vp;
    vp.v_proj = store.id("V." + vid);
    vp.w_q = store.id("attn." + vid + ".w_q");
    vp.w_c = store.id("attn." + vid + ".w_c");
    vp.b = store.id("attn." + vid + ".b");
    expect(vp.v_proj, alpha, static_cast<std::size_t>(v.raw_dim), "V." + vid);
    expect_vec(vp.w_q, alpha, "attn." + vid + ".w_q");
    expect_vec(vp.w_c, alpha, "attn." + vid + ".w_c");
    expect_vec(vp.b, 1, "attn." + vid + ".b");
    ids.verticals.push_back(vp);
  }
  return ids;
}

namespace {

const VerticalParamIds& vertical_ids(const PolicyParamIds& ids, int vertical_id) {
  if (vertical_id < 1 || static_cast<std::size_t>(vertical_id) > ids.verticals.size()) {
    throw DataError("no parameters for vertical " + std::to_string(vertical_id));
  }
  return ids.verticals[static_cast<std::size_t>(vertical_id - 1)];
}

// argmax with exact-tie resolution by lowest id
template <typename IdOf>
std::size_t argmax_with_ties(const std::vector<double>& scores,
                             const std::vector<std::size_t>& pool, IdOf id_of) {
  std::size_t best = pool[0];
  double best_score = scores[0];
  for (std::size_t k = 1; k < pool.size(); ++k) {
    if (scores[k] > best_score ||
        (scores[k] == best_score && id_of(pool[k]) < id_of(best))) {
      best = pool[k];
      best_score = scores[k];
    }
  }
  return best;
}

}  // namespace

std::vector<int> rank_context(const corpus::QueryRecord& query, const nn::ParamStore& store,
                              const PolicyParamIds& ids, int t_c) {
  if (query.blue_links.empty()) throw ArgumentError("rank_context: query has no blue links");
  if (t_c < 1) throw ArgumentError("rank_context: context length must be positive");
  std::size_t len = std::min(static_cast<std::size_t>(t_c), query.blue_links.size());

  const Tensor& u_p = store.at(ids.u_p);
  Vec o = nn::gru_init_state(store, ids.gru, query.embedding);
  Vec cell(o.size(), 0.0);

  std::vector<std::size_t> remaining(query.blue_links.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

  std::vector<int> order;
  order.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    Vec proj = nn::matvec(u_p, nn::concat(o, cell));
    std::vector<double> scores(remaining.size());
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      scores[k] = nn::dot(query.blue_links[remaining[k]].embedding, proj);
    }
    std::size_t chosen = argmax_with_ties(
        scores, remaining, [&](std::size_t i) { return query.blue_links[i].doc_id; });
    order.push_back(static_cast<int>(chosen));
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));

    nn::GruStepValues step =
        nn::gru_step(store, ids.gru, query.blue_links[chosen].embedding, o);
    o = std::move(step.out);
    cell = std::move(step.cell);
  }
  return order;
}

std::vector<int> rank_blue_links_by(const corpus::QueryRecord& query,
                                    const std::function<double(const corpus::BlueLink&)>& score,
                                    int t_c) {
  if (query.blue_links.empty()) throw ArgumentError("rank_blue_links_by: no blue links");
  std::vector<int> order(query.blue_links.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double sa = score(query.blue_links[static_cast<std::size_t>(a)]);
    double sb = score(query.blue_links[static_cast<std::size_t>(b)]);
    if (sa != sb) return sa > sb;
    return query.blue_links[static_cast<std::size_t>(a)].doc_id <
           query.blue_links[static_cast<std::size_t>(b)].doc_id;
  });
  if (static_cast<int>(order.size()) > t_c) order.resize(static_cast<std::size_t>(t_c));
  return order;
}

EpisodeSetup build_episode_setup(nn::Tape& tape, const corpus::QueryRecord& query,
                                 const PolicyParamIds& ids, const std::vector<int>& context,
                                 bool use_context) {
  EpisodeSetup setup;
  setup.query = tape.input(query.embedding);
  setup.o0 = nn::gru_init_state_node(tape, ids.gru, setup.query);
  setup.h0 = nn::encode_initial_state_node(tape, setup.o0, query.embedding.size());
  setup.context = context;

  setup.blue_embeds.reserve(query.blue_links.size());
  for (const corpus::BlueLink& b : query.blue_links) {
    setup.blue_embeds.push_back(tape.input(b.embedding));
  }

  bool have_context = use_context && !context.empty();
  if (have_context) {
    NodeId o = nn::gru_init_state_node(tape, ids.gru_ctx, setup.query);
    for (int idx : context) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= query.blue_links.size()) {
        throw ArgumentError("context refers to a blue link that does not exist");
      }
      nn::GruStepNodes step = nn::gru_step_node(
          tape, ids.gru_ctx, setup.blue_embeds[static_cast<std::size_t>(idx)], o);
      setup.context_out.push_back(step.out);
      o = step.out;
    }
  }

  for (const corpus::ModuleRecord& mod : query.modules) {
    const VerticalParamIds& vp = vertical_ids(ids, mod.vertical_id);
    NodeId content = tape.matvec(vp.v_proj, tape.input(mod.raw_features));
    setup.module_content.push_back(content);
    if (have_context) {
      NodeId wq = tape.param_vector(vp.w_q);
      NodeId wc = tape.param_vector(vp.w_c);
      NodeId bias = tape.param_vector(vp.b);
      std::vector<NodeId> energies;
      energies.reserve(setup.context_out.size());
      for (NodeId out : setup.context_out) {
        NodeId e = tape.sigmoid(
            tape.add(tape.add(tape.dot(wq, setup.query), tape.dot(wc, out)), bias));
        energies.push_back(e);
      }
      NodeId weights = tape.softmax(tape.stack(energies));
      NodeId pseudo = tape.weighted_vector_sum(weights, setup.context_out);
      setup.module_pseudo.push_back(pseudo);
      setup.module_attention.push_back(tape.value(weights));
      setup.module_embeds.push_back(tape.add(pseudo, content));
    } else {
      setup.module_pseudo.push_back(-1);
      setup.module_attention.emplace_back();
      setup.module_embeds.push_back(content);
    }
  }
  return setup;
}

ActionDistribution action_distribution(nn::Tape& tape, const PolicyParamIds& ids, nn::NodeId h,
                                       std::span<const nn::NodeId> candidate_embeds) {
  if (candidate_embeds.empty()) throw ArgumentError("action_distribution: no candidates");
  NodeId proj = tape.matvec(ids.u_p, h);
  std::vector<NodeId> scores;
  scores.reserve(candidate_embeds.size());
  for (NodeId embed : candidate_embeds) scores.push_back(tape.dot(embed, proj));
  ActionDistribution dist;
  dist.scores = tape.stack(scores);
  dist.log_probs = tape.log_softmax(dist.scores);
  dist.probs = tape.value(dist.log_probs);
  for (double& p : dist.probs) p = std::exp(p);
  return dist;
}

std::vector<Vec> encode_context(const nn::ParamStore& store, const PolicyParamIds& ids,
                                const corpus::QueryRecord& query,
                                const std::vector<int>& context) {
  if (context.empty()) throw ArgumentError("encode_context: context is empty");
  std::vector<Vec> outs;
  outs.reserve(context.size());
  Vec o = nn::gru_init_state(store, ids.gru_ctx, query.embedding);
  for (int idx : context) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= query.blue_links.size()) {
      throw ArgumentError("context refers to a blue link that does not exist");
    }
    nn::GruStepValues step = nn::gru_step(
        store, ids.gru_ctx, query.blue_links[static_cast<std::size_t>(idx)].embedding, o);
    o = step.out;
    outs.push_back(o);
  }
  return outs;
}

std::vector<double> attention_energies(const nn::ParamStore& store, const PolicyParamIds& ids,
                                       int vertical_id, const Vec& query,
                                       const std::vector<Vec>& context_outs) {
  const VerticalParamIds& vp = vertical_ids(ids, vertical_id);
  const Vec& wq = store.at(vp.w_q).raw();
  const Vec& wc = store.at(vp.w_c).raw();
  double bias = store.at(vp.b).raw()[0];
  double q_term = nn::dot(wq, query);
  std::vector<double> energies;
  energies.reserve(context_outs.size());
  for (const Vec& out : context_outs) {
    double e = q_term + nn::dot(wc, out) + bias;
    energies.push_back(1.0 / (1.0 + std::exp(-e)));
  }
  return energies;
}

Vec pseudo_module(const std::vector<double>& weights, const std::vector<Vec>& context_outs) {
  if (weights.size() != context_outs.size() || weights.empty()) {
    throw ArgumentError("pseudo_module: weights and context outputs must align");
  }
  Vec acc(context_outs[0].size(), 0.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[k] * context_outs[k][i];
  }
  return acc;
}

Vec module_embedding(const nn::ParamStore& store, const PolicyParamIds& ids, int vertical_id,
                     const Vec& pseudo, const std::vector<double>& raw_features) {
  const VerticalParamIds& vp = vertical_ids(ids, vertical_id);
  Vec content = nn::matvec(store.at(vp.v_proj), raw_features);
  if (pseudo.empty()) return content;
  return nn::add(pseudo, content);
}

std::vector<double> action_probabilities(const nn::ParamStore& store, const PolicyParamIds& ids,
                                         const Vec& h, const std::vector<Vec>& embeddings) {
  if (embeddings.empty()) throw ArgumentError("action_probabilities: no candidates");
  Vec proj = nn::matvec(store.at(ids.u_p), h);
  std::vector<double> scores(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) scores[i] = nn::dot(embeddings[i], proj);
  return nn::softmax(scores);
}

}  // namespace aggrank::policy
