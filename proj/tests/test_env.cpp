#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "aggrank/corpus.hpp"
#include "aggrank/env.hpp"
#include "aggrank/error.hpp"
#include "aggrank/metrics.hpp"
#include "aggrank/policy.hpp"
#include "aggrank/rng.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace aggrank;
using corpus::DatasetSchema;
using corpus::QueryRecord;
using env::EpisodeConfig;
using env::EpisodeEnv;
using metrics::MetricKind;
using metrics::MetricSpec;
using nn::ParamStore;

namespace {

DatasetSchema schema_for(int alpha) {
  DatasetSchema schema;
  schema.alpha = alpha;
  schema.g_max = 4;
  schema.verticals = {{1, "news", 3}, {2, "images", 4}};
  return schema;
}

QueryRecord query_for(int alpha, std::uint64_t seed, int links = 4, int modules = 2) {
  Rng rng(seed);
  QueryRecord q;
  q.query_id = "q";
  q.embedding.resize(static_cast<std::size_t>(alpha));
  for (double& v : q.embedding) v = rng.uniform(-1.0, 1.0);
  for (int d = 0; d < links; ++d) {
    corpus::BlueLink b;
    b.doc_id = "d" + std::to_string(d);
    b.relevance = static_cast<int>(rng.uniform_int(0, 4));
    b.embedding.resize(static_cast<std::size_t>(alpha));
    for (double& v : b.embedding) v = rng.uniform(-1.0, 1.0);
    q.blue_links.push_back(std::move(b));
  }
  if (modules >= 1) q.modules.push_back({"m1", 1, {0.4, -0.2, 0.9}, {3, 2}});
  if (modules >= 2) q.modules.push_back({"m2", 2, {0.1, 0.2, 0.3, 0.4}, {1}});
  q.orientation = {1.0, 0.7, 0.3};
  return q;
}

policy::PolicyParamIds init_policy(ParamStore& store, const DatasetSchema& schema, int alpha,
                                   std::uint64_t seed = 5) {
  Rng rng(seed);
  policy::PolicyConfig config;
  config.alpha = alpha;
  return policy::init_policy_params(store, schema, config, rng);
}

}  // namespace

TEST_CASE("candidates list blue links before modules with resolved gains") {
  DatasetSchema schema = schema_for(3);
  QueryRecord q = query_for(3, 11, 3, 2);
  std::vector<env::Candidate> cands = env::candidates_of(q, schema);
  REQUIRE(cands.size() == 5);

  for (int k = 0; k < 3; ++k) {
    CHECK_FALSE(cands[static_cast<std::size_t>(k)].is_module);
    CHECK(cands[static_cast<std::size_t>(k)].id == q.blue_links[static_cast<std::size_t>(k)].doc_id);
    CHECK(cands[static_cast<std::size_t>(k)].gain.orientation == 1.0);
    CHECK(cands[static_cast<std::size_t>(k)].gain.gain ==
          q.blue_links[static_cast<std::size_t>(k)].relevance);
  }
  CHECK(cands[3].is_module);
  CHECK(cands[3].gain.gain == metrics::module_gain({3, 2}));
  CHECK(cands[3].gain.orientation == doctest::Approx(0.7));
  CHECK(cands[4].gain.orientation == doctest::Approx(0.3));

  std::vector<int> pool = env::gain_pool(cands);
  REQUIRE(pool.size() == 5);
  CHECK(pool[3] == 2);  // floor(2.5)
  CHECK(pool[4] == 1);
}

TEST_CASE("transitions conserve items and reject illegal actions") {
  DatasetSchema schema = schema_for(3);
  QueryRecord q = query_for(3, 13, 3, 2);
  MetricSpec spec{MetricKind::kAsDcg, 5, 4};
  EpisodeEnv ep(q, schema, spec, 5, {});

  CHECK(ep.state().placed.empty());
  CHECK(ep.state().remaining.size() == 5);
  CHECK_FALSE(ep.done());

  ep.step(2);
  CHECK(ep.state().placed.size() + ep.state().remaining.size() == 5);
  CHECK(ep.state().placed[0] == 2);

  CHECK_THROWS_AS(ep.step(2), ArgumentError);   // already placed
  CHECK_THROWS_AS(ep.step(42), ArgumentError);  // unknown

  ep.step(0);
  ep.step(1);
  ep.step(3);
  ep.step(4);
  CHECK(ep.done());
  CHECK_THROWS_AS(ep.step(0), ArgumentError);  // finished
}

TEST_CASE("selecting a top item first earns the single-rank metric as reward") {
  DatasetSchema schema = schema_for(3);
  QueryRecord q = query_for(3, 17, 3, 0);
  q.blue_links[1].relevance = 3;
  MetricSpec spec{MetricKind::kAsDcg, 3, 4};
  EpisodeEnv ep(q, schema, spec, 3, {});
  double r = ep.step(1);
  CHECK(r == doctest::Approx(7.0).epsilon(1e-12));  // (2^3 - 1) / log2(2)
}

TEST_CASE("rewards telescope to the final metric under every kind") {
  DatasetSchema schema = schema_for(3);
  Rng rng(19);
  for (MetricKind kind : {MetricKind::kNdcg, MetricKind::kAsDcg, MetricKind::kAsErr}) {
    for (int trial = 0; trial < 40; ++trial) {
      QueryRecord q = query_for(3, 100 + static_cast<std::uint64_t>(trial), 5, 2);
      MetricSpec spec{kind, 4, 4};
      EpisodeEnv ep(q, schema, spec, 4, {});
      double total = 0.0;
      while (!ep.done()) {
        const std::vector<int>& rem = ep.state().remaining;
        int pick = rem[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(rem.size()) - 1))];
        total += ep.step(pick);
      }
      CHECK(std::fabs(total - ep.serp_value(spec)) <= 1e-10);
    }
  }
}

TEST_CASE("target length clamps to the candidate count") {
  DatasetSchema schema = schema_for(3);
  QueryRecord q = query_for(3, 23, 3, 2);
  MetricSpec spec{MetricKind::kAsDcg, 10, 4};
  EpisodeEnv ep(q, schema, spec, 10, {});
  CHECK(ep.state().target_length == 5);
  CHECK_THROWS_AS(EpisodeEnv(q, schema, spec, 0, {}), ArgumentError);
}

TEST_CASE("greedy rollouts are deterministic and sampled ones telescope") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  policy::PolicyParamIds ids = init_policy(store, schema, 4);
  QueryRecord q = query_for(4, 29, 6, 2);

  EpisodeConfig config;
  config.reward = {MetricKind::kAsDcg, 5, 4};
  config.target_length = 5;
  config.context_length = 4;
  config.context_mode = env::ContextMode::kPolicy;

  env::Rollout a = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  env::Rollout b = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  REQUIRE(a.trace.steps.size() == 5);
  REQUIRE(b.trace.steps.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(a.trace.steps[t].item_id == b.trace.steps[t].item_id);
    CHECK(a.trace.steps[t].log_prob == b.trace.steps[t].log_prob);
  }
  CHECK(a.trace.context_ids == b.trace.context_ids);

  for (int s = 0; s < 100; ++s) {
    Rng rng(derive_seed(7, static_cast<std::uint64_t>(s)));
    env::Rollout r = env::run_episode(q, schema, store, ids, config, env::SelectMode::kSample, &rng);
    double total = 0.0;
    std::set<std::string> seen;
    for (const env::TraceStep& step : r.trace.steps) {
      total += step.reward;
      CHECK(step.log_prob <= 0.0);
      CHECK(std::isfinite(step.log_prob));
      CHECK(seen.insert(step.item_id).second);  // no duplicates
    }
    CHECK(std::fabs(total - r.trace.terminal_metric) <= 1e-10);
    CHECK(std::fabs(total - r.trace.total_return) <= 1e-10);
  }

  CHECK_THROWS_AS(
      env::run_episode(q, schema, store, ids, config, env::SelectMode::kSample, nullptr),
      ArgumentError);
}

TEST_CASE("state and log-prob nodes line up with the trace") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  policy::PolicyParamIds ids = init_policy(store, schema, 4);
  QueryRecord q = query_for(4, 31, 4, 2);

  EpisodeConfig config;
  config.reward = {MetricKind::kAsDcg, 4, 4};
  config.target_length = 4;
  config.context_length = 3;

  env::Rollout r = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  CHECK(r.state_nodes.size() == r.trace.steps.size() + 1);
  CHECK(r.log_prob_nodes.size() == r.trace.steps.size());
  CHECK(r.action_verticals.size() == r.trace.steps.size());
  for (std::size_t t = 0; t < r.trace.steps.size(); ++t) {
    CHECK(r.tape.scalar(r.log_prob_nodes[t]) == doctest::Approx(r.trace.steps[t].log_prob));
    double sum = 0.0;
    for (double p : r.trace.steps[t].probs) sum += p;
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
    CHECK(r.trace.steps[t].candidate_ids.size() == r.trace.steps[t].probs.size());
  }
  // Module placements carry their graph handles.
  for (const env::Rollout::ModulePick& pick : r.module_picks) {
    CHECK(pick.content != -1);
    CHECK(pick.pseudo != -1);
    CHECK(r.trace.steps[pick.step].is_module);
  }
}

TEST_CASE("replay reproduces a recorded episode exactly") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  policy::PolicyParamIds ids = init_policy(store, schema, 4);
  QueryRecord q = query_for(4, 37, 5, 2);

  EpisodeConfig config;
  config.reward = {MetricKind::kAsDcg, 5, 4};
  config.target_length = 5;
  config.context_length = 3;

  Rng rng(41);
  env::Rollout orig = env::run_episode(q, schema, store, ids, config, env::SelectMode::kSample, &rng);
  std::vector<int> context;
  for (const std::string& id : orig.trace.context_ids) {
    for (std::size_t d = 0; d < q.blue_links.size(); ++d) {
      if (q.blue_links[d].doc_id == id) context.push_back(static_cast<int>(d));
    }
  }
  std::vector<std::string> actions;
  for (const env::TraceStep& s : orig.trace.steps) actions.push_back(s.item_id);

  env::Rollout back = env::replay_episode(q, schema, store, ids, config, context, actions);
  REQUIRE(back.trace.steps.size() == orig.trace.steps.size());
  for (std::size_t t = 0; t < back.trace.steps.size(); ++t) {
    CHECK(back.trace.steps[t].item_id == orig.trace.steps[t].item_id);
    CHECK(back.trace.steps[t].log_prob == doctest::Approx(orig.trace.steps[t].log_prob).epsilon(1e-12));
    CHECK(back.trace.steps[t].reward == doctest::Approx(orig.trace.steps[t].reward).epsilon(1e-12));
  }
  CHECK(back.trace.terminal_metric == doctest::Approx(orig.trace.terminal_metric).epsilon(1e-12));

  std::vector<std::string> bogus = actions;
  bogus[0] = "nope";
  CHECK_THROWS_AS(env::replay_episode(q, schema, store, ids, config, context, bogus),
                  ArgumentError);
  std::vector<std::string> extra = actions;
  extra.push_back(actions[0]);
  CHECK_THROWS_AS(env::replay_episode(q, schema, store, ids, config, context, extra),
                  ArgumentError);
}

TEST_CASE("context modes select their sources") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  policy::PolicyParamIds ids = init_policy(store, schema, 4);
  QueryRecord q = query_for(4, 43, 6, 2);

  EpisodeConfig config;
  config.reward = {MetricKind::kAsDcg, 4, 4};
  config.target_length = 4;
  config.context_length = 4;

  config.context_mode = env::ContextMode::kNone;
  env::Rollout none = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  CHECK(none.trace.context_ids.empty());
  CHECK(none.setup.context_out.empty());

  config.context_mode = env::ContextMode::kOracle;
  env::Rollout oracle = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  REQUIRE(oracle.trace.context_ids.size() == 4);
  auto relevance_of = [&](const std::string& id) {
    for (const corpus::BlueLink& b : q.blue_links) {
      if (b.doc_id == id) return b.relevance;
    }
    return -1;
  };
  for (std::size_t j = 1; j < oracle.trace.context_ids.size(); ++j) {
    CHECK(relevance_of(oracle.trace.context_ids[j - 1]) >=
          relevance_of(oracle.trace.context_ids[j]));
  }

  config.context_mode = env::ContextMode::kRandom;
  config.context_seed = 99;
  env::Rollout r1 = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  env::Rollout r2 = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  CHECK(r1.trace.context_ids == r2.trace.context_ids);  // same seed, same shuffle
  config.context_seed = 100;
  env::Rollout r3 = env::run_episode(q, schema, store, ids, config, env::SelectMode::kGreedy, nullptr);
  CHECK(r1.trace.context_ids.size() == r3.trace.context_ids.size());

  CHECK(env::parse_context_mode("policy") == env::ContextMode::kPolicy);
  CHECK(env::parse_context_mode("none") == env::ContextMode::kNone);
  CHECK(env::context_mode_name(env::ContextMode::kOracle) == "oracle");
  CHECK_THROWS_AS(env::parse_context_mode("sideways"), ConfigError);
}

TEST_CASE("trace gains resolve ids and reject strangers") {
  DatasetSchema schema = schema_for(3);
  QueryRecord q = query_for(3, 47, 3, 1);
  env::EpisodeTrace trace;
  trace.query_id = "q";
  env::TraceStep s1;
  s1.item_id = q.modules[0].module_id;
  env::TraceStep s2;
  s2.item_id = q.blue_links[1].doc_id;
  trace.steps = {s1, s2};

  std::vector<metrics::RankedItemGain> gains = env::trace_gains(q, schema, trace);
  REQUIRE(gains.size() == 2);
  CHECK(gains[0].gain == metrics::module_gain(q.modules[0].doc_grades));
  CHECK(gains[0].orientation == doctest::Approx(q.orientation[1]));
  CHECK(gains[1].gain == q.blue_links[1].relevance);

  trace.steps[1].item_id = "ghost";
  CHECK_THROWS_AS(env::trace_gains(q, schema, trace), DataError);
}
