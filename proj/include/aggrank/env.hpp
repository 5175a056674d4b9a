#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aggrank/corpus.hpp"
#include "aggrank/metrics.hpp"
#include "aggrank/policy.hpp"

namespace aggrank::env {

enum class ContextMode { kPolicy, kRandom, kOracle, kNone };
enum class SelectMode { kGreedy, kSample };

ContextMode parse_context_mode(const std::string& text);
std::string context_mode_name(ContextMode mode);

struct EpisodeConfig {
  metrics::MetricSpec reward;
  int target_length = 10;
  int context_length = 10;
  ContextMode context_mode = ContextMode::kPolicy;
  std::uint64_t context_seed = 0;  // only for the random context sampler
};

// One action candidate: a blue link or a module of the query.
struct Candidate {
  std::string id;
  bool is_module = false;
  int index = 0;  // position in query.blue_links or query.modules
  int vertical_id = 0;
  metrics::RankedItemGain gain;
};

// Blue links first, then modules; order is the canonical candidate order.
std::vector<Candidate> candidates_of(const corpus::QueryRecord& query,
                                     const corpus::DatasetSchema& schema);

// The gain multiset of all candidates; fixed per query, used for
// normalization and for telescoping rewards.
std::vector<int> gain_pool(const std::vector<Candidate>& candidates);

// MDP state: growing ranking, shrinking candidate set, fixed context.
struct RankingState {
  std::vector<int> placed;     // candidate indices in rank order
  std::vector<int> remaining;  // candidate indices still available
  std::vector<int> context;    // blue-link indices in context order
  int target_length = 0;

  bool done() const {
    return static_cast<int>(placed.size()) >= target_length || remaining.empty();
  }
};

// Owns the per-query evaluation context and applies transitions.
class EpisodeEnv {
 public:
  EpisodeEnv(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
             const metrics::MetricSpec& reward, int target_length, std::vector<int> context);

  const RankingState& state() const { return state_; }
  const std::vector<Candidate>& candidates() const { return candidates_; }
  const std::vector<int>& pool() const { return pool_; }
  bool done() const { return state_.done(); }

  // Places candidate `action` next; returns the telescoping reward.
  // Illegal actions (unknown, already placed, episode done) throw.
  double step(int action);

  // Items placed so far, as the metrics see them.
  std::vector<metrics::RankedItemGain> placed_gains() const;
  double serp_value(const metrics::MetricSpec& spec) const;

 private:
  RankingState state_;
  std::vector<Candidate> candidates_;
  std::vector<int> pool_;
  metrics::MetricSpec reward_;
};

struct TraceStep {
  std::string item_id;
  bool is_module = false;
  int vertical_id = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  std::vector<std::string> candidate_ids;  // support at this step
  std::vector<double> probs;               // aligned with candidate_ids
};

struct EpisodeTrace {
  std::string query_id;
  std::vector<std::string> context_ids;
  std::vector<TraceStep> steps;
  double total_return = 0.0;
  double terminal_metric = 0.0;
};

// A finished episode together with its differentiable graph. state_nodes
// holds the encoded states h_0..h_T; log_prob_nodes the chosen-action log
// probabilities per step.
struct Rollout {
  EpisodeTrace trace;
  nn::Tape tape;
  policy::EpisodeSetup setup;
  std::vector<nn::NodeId> log_prob_nodes;
  std::vector<nn::NodeId> state_nodes;
  std::vector<int> action_verticals;  // vertical of the item placed at step t
  struct ModulePick {
    std::size_t step = 0;
    int vertical_id = 0;
    nn::NodeId pseudo = -1;   // -1 when the episode ran without context
    nn::NodeId content = -1;
  };
  std::vector<ModulePick> module_picks;

  explicit Rollout(const nn::ParamStore* store) : tape(store) {}
};

// Ranks the context per config, builds the policy graph, and rolls the
// sequential construction to termination. Sampling requires an rng.
Rollout run_episode(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
                    const nn::ParamStore& store, const policy::PolicyParamIds& ids,
                    const EpisodeConfig& config, SelectMode mode, Rng* rng);

// Gains of the trace's placed items in rank order, resolved by item id.
std::vector<metrics::RankedItemGain> trace_gains(const corpus::QueryRecord& query,
                                                 const corpus::DatasetSchema& schema,
                                                 const EpisodeTrace& trace);

// Re-runs a fixed episode structure (context order + action sequence)
// under the current parameters; used for gradient validation.
Rollout replay_episode(const corpus::QueryRecord& query, const corpus::DatasetSchema& schema,
                       const nn::ParamStore& store, const policy::PolicyParamIds& ids,
                       const EpisodeConfig& config, const std::vector<int>& context,
                       const std::vector<std::string>& actions);

void write_traces(const std::string& path, const std::vector<EpisodeTrace>& traces);

}  // namespace aggrank::env
