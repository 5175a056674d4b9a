#include <cmath>
#include <vector>

#include "aggrank/corpus.hpp"
#include "aggrank/env.hpp"
#include "aggrank/error.hpp"
#include "aggrank/gru.hpp"
#include "aggrank/policy.hpp"
#include "aggrank/rng.hpp"
#include "aggrank/ssl.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace aggrank;
using corpus::DatasetSchema;
using corpus::QueryRecord;
using nn::ParamStore;
using nn::Tensor;
using nn::Vec;
using ssl::SslParamIds;

namespace {

DatasetSchema schema_for(int alpha) {
  DatasetSchema schema;
  schema.alpha = alpha;
  schema.g_max = 4;
  schema.verticals = {{1, "news", 3}, {2, "images", 4}};
  return schema;
}

QueryRecord query_for(int alpha, std::uint64_t seed, int links, int modules) {
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

env::Rollout roll(const QueryRecord& q, const DatasetSchema& schema, const ParamStore& store,
                  const policy::PolicyParamIds& ids, int target, std::uint64_t seed) {
  env::EpisodeConfig config;
  config.reward = {metrics::MetricKind::kAsDcg, target, 4};
  config.target_length = target;
  config.context_length = 3;
  Rng rng(seed);
  return env::run_episode(q, schema, store, ids, config, env::SelectMode::kSample, &rng);
}

}  // namespace

TEST_CASE("registration shapes and resolution") {
  ParamStore store;
  Rng rng(3);
  SslParamIds ids = ssl::init_ssl_params(store, 4, 2, rng);
  CHECK(store.at(ids.inverse_w).rows() == 3);   // J + 1 classes
  CHECK(store.at(ids.inverse_w).cols() == 16);  // 4 * alpha
  CHECK(store.at(ids.inverse_b).size() == 3);
  CHECK(store.at(ids.forward_w).rows() == 8);
  CHECK(store.at(ids.forward_w).cols() == 12);
  CHECK(store.at(ids.forward_b).size() == 8);
  CHECK(ssl::has_ssl_params(store));

  SslParamIds back = ssl::resolve_ssl_params(store, 4, 2);
  CHECK(back.inverse_w == ids.inverse_w);
  CHECK_THROWS_AS(ssl::resolve_ssl_params(store, 5, 2), SchemaError);
  CHECK_THROWS_AS(ssl::resolve_ssl_params(store, 4, 3), SchemaError);

  ParamStore empty;
  CHECK_FALSE(ssl::has_ssl_params(empty));
}

TEST_CASE("cross-entropy of logits [1,0,0] against class 0") {
  // -log(e / (e + 2)) = 0.5514...
  ParamStore store;
  Rng rng(1);
  SslParamIds ids = ssl::init_ssl_params(store, 1, 2, rng);
  store.at(ids.inverse_w).fill(0.0);
  store.at(ids.inverse_b).raw() = {1.0, 0.0, 0.0};

  Vec h_t = {0.3, -0.2};
  Vec h_next = {0.9, 0.1};
  Vec logits = ssl::inverse_logits(store, ids, h_t, h_next);
  REQUIRE(logits.size() == 3);
  CHECK(logits[0] == doctest::Approx(1.0));

  double loss = ssl::inverse_loss(store, ids, h_t, h_next, 0);
  CHECK(std::fabs(loss - 0.5514) <= 1e-4);

  // The other classes are likelier to be wrong: higher loss.
  CHECK(ssl::inverse_loss(store, ids, h_t, h_next, 1) > loss);
  CHECK_THROWS_AS(ssl::inverse_loss(store, ids, h_t, h_next, 3), ArgumentError);
  CHECK_THROWS_AS(ssl::inverse_loss(store, ids, h_t, h_next, -1), ArgumentError);
}

TEST_CASE("prediction disagreement with a hand-built head") {
  // W reads only the item block on its first output row; the predictions
  // differ by (pseudo - content) there, so the loss is the square.
  ParamStore store;
  Rng rng(1);
  SslParamIds ids = ssl::init_ssl_params(store, 1, 2, rng);
  store.at(ids.forward_w).fill(0.0);
  store.at(ids.forward_w).at(0, 2) = 1.0;  // item block starts at column 2*alpha
  store.at(ids.forward_b).raw() = {5.0, -3.0};

  Vec h = {0.4, 0.6};
  double loss = ssl::forward_loss(store, ids, h, Vec{3.0}, Vec{1.0});
  CHECK(loss == doctest::Approx(4.0).epsilon(1e-12));

  // Symmetric in the two predictions.
  CHECK(ssl::forward_loss(store, ids, h, Vec{1.0}, Vec{3.0}) == doctest::Approx(loss));

  // The shared bias cancels: any bias gives the same loss.
  store.at(ids.forward_b).raw() = {100.0, 100.0};
  CHECK(ssl::forward_loss(store, ids, h, Vec{3.0}, Vec{1.0}) == doctest::Approx(4.0));

  // Identical inputs predict identically.
  CHECK(ssl::forward_loss(store, ids, h, Vec{2.0}, Vec{2.0}) == 0.0);
}

TEST_CASE("episode losses average the per-step terms") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  Rng rng(11);
  policy::PolicyConfig pc;
  pc.alpha = 4;
  policy::PolicyParamIds pids = policy::init_policy_params(store, schema, pc, rng);
  SslParamIds sids = ssl::init_ssl_params(store, 4, 2, rng);

  QueryRecord q = query_for(4, 13, 4, 2);
  env::Rollout r = roll(q, schema, store, pids, 5, 17);
  REQUIRE(r.trace.steps.size() == 5);

  // Recompute both means through the forward-only mirrors.
  std::vector<Vec> states;
  for (nn::NodeId n : r.state_nodes) states.push_back(r.tape.value(n));
  double want_inverse = 0.0;
  for (std::size_t t = 0; t < r.trace.steps.size(); ++t) {
    want_inverse += ssl::inverse_loss(store, sids, states[t], states[t + 1],
                                      r.action_verticals[t]);
  }
  want_inverse /= static_cast<double>(r.trace.steps.size());

  double want_forward = 0.0;
  std::size_t picks = 0;
  for (const env::Rollout::ModulePick& pick : r.module_picks) {
    if (pick.pseudo < 0) continue;
    want_forward += ssl::forward_loss(store, sids, states[pick.step],
                                      r.tape.value(pick.pseudo), r.tape.value(pick.content));
    ++picks;
  }
  if (picks > 0) want_forward /= static_cast<double>(picks);

  ssl::SslLossNodes nodes = ssl::add_episode_losses(r, sids);
  CHECK(r.tape.scalar(nodes.inverse) == doctest::Approx(want_inverse).epsilon(1e-12));
  CHECK(r.tape.scalar(nodes.forward) == doctest::Approx(want_forward).epsilon(1e-12));
  CHECK(r.tape.scalar(nodes.inverse) > 0.0);
}

TEST_CASE("blue-link-only episodes have zero prediction loss") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  Rng rng(19);
  policy::PolicyConfig pc;
  pc.alpha = 4;
  policy::PolicyParamIds pids = policy::init_policy_params(store, schema, pc, rng);
  SslParamIds sids = ssl::init_ssl_params(store, 4, 2, rng);

  QueryRecord q = query_for(4, 23, 5, 0);
  env::Rollout r = roll(q, schema, store, pids, 4, 29);
  ssl::SslLossNodes nodes = ssl::add_episode_losses(r, sids);
  CHECK(r.tape.scalar(nodes.forward) == 0.0);
  CHECK(r.tape.scalar(nodes.inverse) > 0.0);
}

TEST_CASE("a single-step episode classifies exactly that step") {
  DatasetSchema schema = schema_for(4);
  ParamStore store;
  Rng rng(31);
  policy::PolicyConfig pc;
  pc.alpha = 4;
  policy::PolicyParamIds pids = policy::init_policy_params(store, schema, pc, rng);
  SslParamIds sids = ssl::init_ssl_params(store, 4, 2, rng);

  QueryRecord q = query_for(4, 37, 3, 1);
  env::Rollout r = roll(q, schema, store, pids, 1, 41);
  REQUIRE(r.trace.steps.size() == 1);

  double want = ssl::inverse_loss(store, sids, r.tape.value(r.state_nodes[0]),
                                  r.tape.value(r.state_nodes[1]), r.action_verticals[0]);
  ssl::SslLossNodes nodes = ssl::add_episode_losses(r, sids);
  CHECK(r.tape.scalar(nodes.inverse) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("auxiliary loss gradients match finite differences") {
  DatasetSchema schema = schema_for(3);
  ParamStore store;
  Rng rng(43);
  policy::PolicyConfig pc;
  pc.alpha = 3;
  policy::PolicyParamIds pids = policy::init_policy_params(store, schema, pc, rng);
  SslParamIds sids = ssl::init_ssl_params(store, 3, 2, rng);

  QueryRecord q = query_for(3, 47, 3, 2);
  env::EpisodeConfig config;
  config.reward = {metrics::MetricKind::kAsDcg, 4, 4};
  config.target_length = 4;
  config.context_length = 2;

  // Freeze one sampled episode, then replay it for every evaluation so the
  // objective is a deterministic function of the parameters.
  Rng sample_rng(53);
  env::Rollout probe =
      env::run_episode(q, schema, store, pids, config, env::SelectMode::kSample, &sample_rng);
  std::vector<int> context;
  for (const std::string& id : probe.trace.context_ids) {
    for (std::size_t d = 0; d < q.blue_links.size(); ++d) {
      if (q.blue_links[d].doc_id == id) context.push_back(static_cast<int>(d));
    }
  }
  std::vector<std::string> actions;
  for (const env::TraceStep& s : probe.trace.steps) actions.push_back(s.item_id);

  auto combined = [&](env::Rollout& r, ssl::SslLossNodes nodes) {
    std::vector<nn::NodeId> scalars = {nodes.inverse, nodes.forward};
    std::vector<double> coeffs = {1.0, 0.7};
    return r.tape.weighted_sum(scalars, coeffs);
  };

  env::Rollout r = env::replay_episode(q, schema, store, pids, config, context, actions);
  nn::NodeId root = combined(r, ssl::add_episode_losses(r, sids));
  nn::Gradients grads(store);
  r.tape.backward(root, grads);

  auto eval = [&]() {
    env::Rollout rr = env::replay_episode(q, schema, store, pids, config, context, actions);
    nn::NodeId rt = combined(rr, ssl::add_episode_losses(rr, sids));
    return rr.tape.scalar(rt);
  };
  auto report = testsup::fd_check(store, grads, eval);
  INFO("worst " << report.worst_param << " analytic " << report.worst_analytic << " fd "
                << report.worst_fd);
  CHECK(report.max_rel_err < 1e-4);
}
