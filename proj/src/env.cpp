#include "aggrank/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "aggrank/error.hpp"

namespace aggrank::env {

using nn::NodeId;

ContextMode parse_context_mode(const std::string& text) {
  if (text == "policy") return ContextMode::kPolicy;
  if (text == "random") return ContextMode::kRandom;
  if (text == "oracle") return ContextMode::kOracle;
  if (text == "none") return ContextMode::kNone;
  throw ConfigError("unknown context mode: '" + text +
                    "' (expected policy, random, oracle, or none)");
}

std::string context_mode_name(ContextMode mode) {
  switch (mode) {
    case ContextMode::kPolicy: return "policy";
    case ContextMode::kRandom: return "random";
    case ContextMode::kOracle: return "oracle";
    case ContextMode::kNone: return "none";
  }
  return "?";
}

std::vector<Candidate> candidates_of(const corpus::QueryRecord& query,
                                     const corpus::DatasetSchema& schema) {
  std::vector<Candidate> out;
  out.reserve(query.blue_links.size() + query.modules.size());
  for (std::size_t i = 0; i < query.blue_links.size(); ++i) {
    const corpus::BlueLink& b = query.blue_links[i];
    Candidate c;
    c.id = b.doc_id;
    c.is_module = false;
    c.index = static_cast<int>(i);
    c.vertical_id = 0;
    c.gain = {b.relevance, 1.0, 0};
    out.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < query.modules.size(); ++i) {
    const corpus::ModuleRecord& m = query.modules[i];
    Candidate c;
    c.id = m.module_id;
    c.is_module = true;
    c.index = static_cast<int>(i);
    c.vertical_id = m.vertical_id;
    double orientation = query.orientation[static_cast<std::size_t>(m.vertical_id)];
    c.gain = {metrics::module_gain(m.doc_grades), orientation, m.vertical_id};
    out.push_back(std::move(c));
  }
  (void)schema;
  return out;
}

std::vector<int> gain_pool(const std::vector<Candidate>& candidates) {
  std::vector<int> pool;
  pool.reserve(candidates.size());
  for (const Candidate& c : candidates) pool.push_back(c.gain.gain);
  return pool;
}

EpisodeEnv::EpisodeEnv(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
                       const metrics::MetricSpec& reward, int target_length,
                       std::vector<int> context)
    : candidates_(candidates_of(query, schema)), reward_(reward) {
  if (candidates_.empty()) throw ArgumentError("episode on a query with no candidates");
  if (target_length < 1) throw ArgumentError("target length must be positive");
  pool_ = gain_pool(candidates_);
  int n = static_cast<int>(candidates_.size());
  if (target_length > n) {
    std::fprintf(stderr, "warning: target length %d exceeds %d candidates for %s, truncating\n",
                 target_length, n, query.query_id.c_str());
    target_length = n;
  }
  state_.target_length = target_length;
  state_.context = std::move(context);
  state_.remaining.resize(candidates_.size());
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    state_.remaining[i] = static_cast<int>(i);
  }
}

double EpisodeEnv::step(int action) {
  if (done()) throw ArgumentError("step() on a finished episode");
  auto it = std::find(state_.remaining.begin(), state_.remaining.end(), action);
  if (it == state_.remaining.end()) {
    throw ArgumentError("illegal action: candidate " + std::to_string(action) +
                        " is not available");
  }
  std::vector<metrics::RankedItemGain> before = placed_gains();
  state_.placed.push_back(action);
  state_.remaining.erase(it);
  std::vector<metrics::RankedItemGain> after = placed_gains();
  return metrics::step_reward(reward_, pool_, before, after);
}

std::vector<metrics::RankedItemGain> EpisodeEnv::placed_gains() const {
  std::vector<metrics::RankedItemGain> gains;
  gains.reserve(state_.placed.size());
  for (int idx : state_.placed) gains.push_back(candidates_[static_cast<std::size_t>(idx)].gain);
  return gains;
}

double EpisodeEnv::serp_value(const metrics::MetricSpec& spec) const {
  return metrics::serp_value(placed_gains(), pool_, spec);
}

namespace {

std::vector<int> make_context(const corpus::QueryRecord& query, const nn::ParamStore& store,
                              const policy::PolicyParamIds& ids, const EpisodeConfig& config) {
  if (config.context_mode == ContextMode::kNone || query.blue_links.empty() ||
      config.context_length < 1) {
    return {};
  }
  switch (config.context_mode) {
    case ContextMode::kPolicy:
      return policy::rank_context(query, store, ids, config.context_length);
    case ContextMode::kOracle:
      return policy::rank_blue_links_by(
          query, [](const corpus::BlueLink& b) { return static_cast<double>(b.relevance); },
          config.context_length);
    case ContextMode::kRandom: {
      Rng rng(derive_seed(config.context_seed, 0xc0417e77));
      std::vector<int> order(query.blue_links.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      rng.shuffle(order);
      if (static_cast<int>(order.size()) > config.context_length) {
        order.resize(static_cast<std::size_t>(config.context_length));
      }
      return order;
    }
    default:
      return {};
  }
}

// Runs the construction loop; `choose` returns a position into the current
// remaining-candidate list.
Rollout roll(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
             const nn::ParamStore& store, const policy::PolicyParamIds& ids,
             const EpisodeConfig& config, const std::vector<int>& context,
             const std::function<std::size_t(const policy::ActionDistribution&,
                                             const std::vector<int>&)>& choose) {
  Rollout rollout(&store);
  EpisodeEnv episode(query, schema, config.reward, config.target_length, context);

  bool use_context = config.context_mode != ContextMode::kNone;
  rollout.setup = policy::build_episode_setup(rollout.tape, query, ids, context, use_context);

  rollout.trace.query_id = query.query_id;
  for (int idx : context) {
    rollout.trace.context_ids.push_back(
        query.blue_links[static_cast<std::size_t>(idx)].doc_id);
  }

  const std::vector<Candidate>& cands = episode.candidates();
  auto embed_of = [&](int cand) -> NodeId {
    const Candidate& c = cands[static_cast<std::size_t>(cand)];
    return c.is_module ? rollout.setup.module_embeds[static_cast<std::size_t>(c.index)]
                       : rollout.setup.blue_embeds[static_cast<std::size_t>(c.index)];
  };

  NodeId o = rollout.setup.o0;
  NodeId h = rollout.setup.h0;
  rollout.state_nodes.push_back(h);

  while (!episode.done()) {
    const std::vector<int>& remaining = episode.state().remaining;
    std::vector<NodeId> embeds;
    embeds.reserve(remaining.size());
    for (int cand : remaining) embeds.push_back(embed_of(cand));

    policy::ActionDistribution dist =
        policy::action_distribution(rollout.tape, ids, h, embeds);
    std::size_t pos = choose(dist, remaining);
    if (pos >= remaining.size()) throw ArgumentError("action choice out of range");
    int chosen = remaining[pos];
    const Candidate& c = cands[static_cast<std::size_t>(chosen)];

    TraceStep ts;
    ts.item_id = c.id;
    ts.is_module = c.is_module;
    ts.vertical_id = c.vertical_id;
    ts.log_prob = rollout.tape.value(dist.log_probs)[pos];
    ts.probs = dist.probs;
    for (int cand : remaining) {
      ts.candidate_ids.push_back(cands[static_cast<std::size_t>(cand)].id);
    }

    NodeId logpi = rollout.tape.pick(dist.log_probs, pos);
    rollout.log_prob_nodes.push_back(logpi);
    rollout.action_verticals.push_back(c.vertical_id);
    if (c.is_module) {
      Rollout::ModulePick pick;
      pick.step = rollout.trace.steps.size();
      pick.vertical_id = c.vertical_id;
      pick.pseudo = rollout.setup.module_pseudo[static_cast<std::size_t>(c.index)];
      pick.content = rollout.setup.module_content[static_cast<std::size_t>(c.index)];
      rollout.module_picks.push_back(pick);
    }

    ts.reward = episode.step(chosen);
    rollout.trace.total_return += ts.reward;
    rollout.trace.steps.push_back(std::move(ts));

    nn::GruStepNodes gstep = nn::gru_step_node(rollout.tape, ids.gru, embed_of(chosen), o);
    o = gstep.out;
    h = nn::encode_state_node(rollout.tape, gstep);
    rollout.state_nodes.push_back(h);
  }

  rollout.trace.terminal_metric = episode.serp_value(config.reward);
  return rollout;
}

}  // namespace

Rollout run_episode(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
                    const nn::ParamStore& store, const policy::PolicyParamIds& ids,
                    const EpisodeConfig& config, SelectMode mode, Rng* rng) {
  if (mode == SelectMode::kSample && rng == nullptr) {
    throw ArgumentError("sampled rollout requires an rng");
  }
  std::vector<int> context = make_context(query, store, ids, config);

  auto choose = [&](const policy::ActionDistribution& dist,
                    const std::vector<int>& remaining) -> std::size_t {
    if (mode == SelectMode::kSample) return rng->sample_index(dist.probs);
    std::size_t best = 0;
    for (std::size_t k = 1; k < dist.probs.size(); ++k) {
      double a = dist.probs[k];
      double b = dist.probs[best];
      // ties on exact score resolve to the lowest item id
      if (a > b) {
        best = k;
      } else if (a == b) {
        const corpus::QueryRecord& q = query;
        auto id_of = [&](std::size_t pos) -> const std::string& {
          int cand = remaining[pos];
          std::size_t links = q.blue_links.size();
          if (cand < static_cast<int>(links)) {
            return q.blue_links[static_cast<std::size_t>(cand)].doc_id;
          }
          return q.modules[static_cast<std::size_t>(cand) - links].module_id;
        };
        if (id_of(k) < id_of(best)) best = k;
      }
    }
    return best;
  };

  return roll(query, schema, store, ids, config, context, choose);
}

std::vector<metrics::RankedItemGain> trace_gains(const corpus::QueryRecord& query,
                                                 const corpus::DatasetSchema& schema,
                                                 const EpisodeTrace& trace) {
  std::vector<Candidate> cands = candidates_of(query, schema);
  std::vector<metrics::RankedItemGain> gains;
  gains.reserve(trace.steps.size());
  for (const TraceStep& s : trace.steps) {
    auto it = std::find_if(cands.begin(), cands.end(),
                           [&](const Candidate& c) { return c.id == s.item_id; });
    if (it == cands.end()) {
      throw DataError("trace item '" + s.item_id + "' is not a candidate of " + query.query_id);
    }
    gains.push_back(it->gain);
  }
  return gains;
}

Rollout replay_episode(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
                       const nn::ParamStore& store, const policy::PolicyParamIds& ids,
                       const EpisodeConfig& config, const std::vector<int>& context,
                       const std::vector<std::string>& actions) {
  std::size_t cursor = 0;
  auto choose = [&](const policy::ActionDistribution&,
                    const std::vector<int>& remaining) -> std::size_t {
    if (cursor >= actions.size()) throw ArgumentError("replay ran past the recorded actions");
    const std::string& want = actions[cursor++];
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      int cand = remaining[k];
      std::size_t links = query.blue_links.size();
      const std::string& id =
          cand < static_cast<int>(links)
              ? query.blue_links[static_cast<std::size_t>(cand)].doc_id
              : query.modules[static_cast<std::size_t>(cand) - links].module_id;
      if (id == want) return k;
    }
    throw ArgumentError("replay action '" + want + "' is not available");
  };
  Rollout r = roll(query, schema, store, ids, config, context, choose);
  if (cursor != actions.size()) {
    throw ArgumentError("replay finished before consuming all recorded actions");
  }
  return r;
}

void write_traces(const std::string& path, const std::vector<EpisodeTrace>& traces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const EpisodeTrace& t : traces) {
    nlohmann::ordered_json root;
    root["query_id"] = t.query_id;
    root["context"] = t.context_ids;
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const TraceStep& s = t.steps[i];
      steps.push_back({{"rank", i + 1},
                       {"item_id", s.item_id},
                       {"vertical_id", s.vertical_id},
                       {"log_prob", s.log_prob},
                       {"reward", s.reward}});
    }
    root["steps"] = std::move(steps);
    root["total_return"] = t.total_return;
    root["terminal_metric"] = t.terminal_metric;
    out << root.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace aggrank::env
