#include <cmath>
#include <vector>

#include "aggrank/gru.hpp"
#include "aggrank/params.hpp"
#include "aggrank/rng.hpp"
#include "aggrank/tape.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace aggrank;
using nn::GruParamIds;
using nn::Gradients;
using nn::ParamStore;
using nn::Tape;
using nn::Tensor;
using nn::Vec;

namespace {

// Hand-rolled scalar recurrence, no shared code with the library path.
struct ScalarGru {
  const ParamStore& store;
  const GruParamIds& ids;

  double row_dot(int param, std::size_t row, const Vec& x) const {
    const Tensor& w = store.at(param);
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += w.at(row, j) * x[j];
    return acc;
  }

  Vec init(const Vec& q) const {
    Vec o(store.at(ids.w_q).rows());
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-row_dot(ids.w_q, i, q)));
    return o;
  }

  // Returns {out, cell}.
  std::pair<Vec, Vec> step(const Vec& x, const Vec& o) const {
    std::size_t n = o.size();
    Vec out(n), cell(n);
    for (std::size_t i = 0; i < n; ++i) {
      double u = 1.0 / (1.0 + std::exp(-(row_dot(ids.w_u_x, i, x) + row_dot(ids.w_u_s, i, o))));
      Vec gated(n);
      for (std::size_t k = 0; k < n; ++k) {
        double r_k =
            1.0 / (1.0 + std::exp(-(row_dot(ids.w_r_x, k, x) + row_dot(ids.w_r_s, k, o))));
        gated[k] = r_k * o[k];
      }
      cell[i] = std::tanh(row_dot(ids.w_x, i, x) + row_dot(ids.w_s, i, gated));
      out[i] = (1.0 - u) * o[i] + u * cell[i];
    }
    return {out, cell};
  }
};

ParamStore make_store(std::size_t alpha, std::uint64_t seed, GruParamIds* ids) {
  ParamStore store;
  Rng rng(seed);
  *ids = nn::register_gru(store, "gru", alpha, rng);
  return store;
}

}  // namespace

TEST_CASE("recurrence matches a scalar-loop oracle over three steps") {
  GruParamIds ids;
  ParamStore store = make_store(2, 31, &ids);
  ScalarGru oracle{store, ids};

  Vec q = {0.4, -0.9};
  std::vector<Vec> xs = {{0.2, 0.1}, {-0.5, 0.8}, {0.05, -0.3}};

  Vec o = nn::gru_init_state(store, ids, q);
  Vec o_ref = oracle.init(q);
  for (std::size_t i = 0; i < o.size(); ++i) CHECK(std::fabs(o[i] - o_ref[i]) <= 1e-12);

  for (const Vec& x : xs) {
    nn::GruStepValues step = nn::gru_step(store, ids, x, o);
    auto [out_ref, cell_ref] = oracle.step(x, o_ref);
    for (std::size_t i = 0; i < o.size(); ++i) {
      CHECK(std::fabs(step.out[i] - out_ref[i]) <= 1e-12);
      CHECK(std::fabs(step.cell[i] - cell_ref[i]) <= 1e-12);
    }
    o = step.out;
    o_ref = out_ref;
  }
}

TEST_CASE("zero weights give half gates, zero cell, halved state") {
  ParamStore store;
  Rng rng(1);
  GruParamIds ids = nn::register_gru(store, "gru", 3, rng);
  for (int id : {ids.w_u_x, ids.w_u_s, ids.w_r_x, ids.w_r_s, ids.w_x, ids.w_s, ids.w_q}) {
    store.at(id).fill(0.0);
  }

  Vec o_prev = {0.8, -0.4, 0.2};
  nn::GruStepValues step = nn::gru_step(store, ids, Vec{1.0, 2.0, 3.0}, o_prev);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(step.update[i] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(step.reset[i] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(step.cell[i] == doctest::Approx(0.0));
    CHECK(step.out[i] == doctest::Approx(0.5 * o_prev[i]).epsilon(1e-15));
  }

  Vec o0 = nn::gru_init_state(store, ids, Vec{5.0, -2.0, 0.0});
  for (double v : o0) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gates stay in their ranges") {
  GruParamIds ids;
  ParamStore store = make_store(4, 99, &ids);
  Rng rng(1234);
  Vec o(4);
  for (double& v : o) v = rng.uniform(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec x(4);
    for (double& v : x) v = rng.uniform(-3.0, 3.0);
    nn::GruStepValues step = nn::gru_step(store, ids, x, o);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(step.update[i] > 0.0);
      CHECK(step.update[i] < 1.0);
      CHECK(step.reset[i] > 0.0);
      CHECK(step.reset[i] < 1.0);
      CHECK(step.cell[i] > -1.0);
      CHECK(step.cell[i] < 1.0);
    }
    o = step.out;
  }
}

TEST_CASE("state encoding concatenates output and cell halves") {
  GruParamIds ids;
  ParamStore store = make_store(3, 7, &ids);
  Vec o0 = nn::gru_init_state(store, ids, Vec{0.1, 0.2, 0.3});
  nn::GruStepValues step = nn::gru_step(store, ids, Vec{1.0, -1.0, 0.5}, o0);

  Vec h = nn::encode_state(step);
  REQUIRE(h.size() == 6);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(h[i] == step.out[i]);
    CHECK(h[3 + i] == step.cell[i]);
  }
  CHECK(nn::squared_norm(h) ==
        doctest::Approx(nn::squared_norm(step.out) + nn::squared_norm(step.cell)).epsilon(1e-12));

  Vec h0 = nn::encode_initial_state(o0);
  REQUIRE(h0.size() == 6);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(h0[i] == o0[i]);
    CHECK(h0[3 + i] == 0.0);
  }

  std::vector<nn::GruStepValues> steps = {step};
  Vec at0 = nn::encode_state_at(o0, steps, 0);
  Vec at1 = nn::encode_state_at(o0, steps, 1);
  CHECK(at0 == h0);
  CHECK(at1 == h);
}

TEST_CASE("tape recurrence equals the forward-only recurrence") {
  GruParamIds ids;
  ParamStore store = make_store(3, 55, &ids);
  Vec q = {0.3, -0.2, 0.9};
  std::vector<Vec> xs = {{0.5, 0.5, -0.5}, {-1.0, 0.25, 0.0}};

  Vec o_plain = nn::gru_init_state(store, ids, q);
  Tape tape(&store);
  nn::NodeId o_node = nn::gru_init_state_node(tape, ids, tape.input(q));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tape.value(o_node)[i] == doctest::Approx(o_plain[i]).epsilon(1e-15));
  }

  for (const Vec& x : xs) {
    nn::GruStepValues plain = nn::gru_step(store, ids, x, o_plain);
    nn::GruStepNodes node = nn::gru_step_node(tape, ids, tape.input(x), o_node);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(tape.value(node.out)[i] == doctest::Approx(plain.out[i]).epsilon(1e-15));
      CHECK(tape.value(node.cell)[i] == doctest::Approx(plain.cell[i]).epsilon(1e-15));
    }
    nn::NodeId h_node = nn::encode_state_node(tape, node);
    Vec h_plain = nn::encode_state(plain);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(tape.value(h_node)[i] == doctest::Approx(h_plain[i]).epsilon(1e-15));
    }
    o_plain = plain.out;
    o_node = node.out;
  }
}

TEST_CASE("gradients through an unrolled chain match finite differences") {
  GruParamIds ids;
  ParamStore store = make_store(2, 202, &ids);
  Vec q = {0.7, -0.4};
  std::vector<Vec> xs = {{0.3, 0.6}, {-0.8, 0.2}, {0.1, -0.1}};
  Vec probe = {1.3, -0.7, 0.4, 0.9};

  auto objective = [&](Tape& tape) {
    nn::NodeId o = nn::gru_init_state_node(tape, ids, tape.input(q));
    nn::GruStepNodes last{};
    for (const Vec& x : xs) {
      last = nn::gru_step_node(tape, ids, tape.input(x), o);
      o = last.out;
    }
    return tape.dot(nn::encode_state_node(tape, last), tape.input(probe));
  };

  Tape tape(&store);
  nn::NodeId root = objective(tape);
  Gradients grads(store);
  tape.backward(root, grads);

  auto eval = [&]() {
    Tape t(&store);
    return t.scalar(objective(t));
  };
  auto report = testsup::fd_check(store, grads, eval);
  INFO("worst " << report.worst_param << " analytic " << report.worst_analytic << " fd "
                << report.worst_fd);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("registration draws differ between prefixes and resolve by name") {
  ParamStore store;
  Rng rng(11);
  GruParamIds a = nn::register_gru(store, "gru", 4, rng);
  GruParamIds b = nn::register_gru(store, "gru_ctx", 4, rng);
  CHECK(a.w_u_x != b.w_u_x);
  CHECK(store.at(a.w_u_x).raw() != store.at(b.w_u_x).raw());

  GruParamIds r = nn::resolve_gru(store, "gru_ctx");
  CHECK(r.w_q == b.w_q);
  CHECK(r.w_s == b.w_s);
  CHECK_THROWS_AS(nn::resolve_gru(store, "missing"), ArgumentError);
}
