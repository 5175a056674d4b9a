#include "aggrank/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "aggrank/error.hpp"
#include "aggrank/textio.hpp"

namespace aggrank::train {

using nn::NodeId;

StepRule parse_step_rule(const std::string& text) {
  if (text == "adam") return StepRule::kAdam;
  if (text == "sgd") return StepRule::kSgd;
  throw ConfigError("unknown step rule: '" + text + "' (expected adam or sgd)");
}

Supervision parse_supervision(const std::string& text) {
  if (text == "full") return Supervision::kFull;
  if (text == "weak") return Supervision::kWeak;
  throw ConfigError("unknown supervision: '" + text + "' (expected full or weak)");
}

BaselineMode parse_baseline(const std::string& text) {
  if (text == "batch_mean") return BaselineMode::kBatchMean;
  if (text == "none") return BaselineMode::kNone;
  throw ConfigError("unknown baseline: '" + text + "' (expected batch_mean or none)");
}

std::string step_rule_name(StepRule rule) { return rule == StepRule::kAdam ? "adam" : "sgd"; }
std::string supervision_name(Supervision s) { return s == Supervision::kFull ? "full" : "weak"; }
std::string baseline_name(BaselineMode b) {
  return b == BaselineMode::kBatchMean ? "batch_mean" : "none";
}

void validate_train_config(const TrainConfig& config) {
  if (config.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (config.episodes_per_batch < 1) throw ConfigError("episodes_per_batch must be >= 1");
  if (config.max_updates < 0) throw ConfigError("max_updates must be >= 0");
  if (config.inverse_weight < 0.0 || config.forward_weight < 0.0) {
    throw ConfigError("auxiliary loss weights must be >= 0");
  }
  if (config.context_length < 1) throw ConfigError("context_length must be >= 1");
  if (config.target_length < 1) throw ConfigError("target_length must be >= 1");
  if (config.alpha < 1) throw ConfigError("alpha must be >= 1");
  if (config.threads < 1) throw ConfigError("threads must be >= 1");
  if (config.folds < 1) throw ConfigError("folds must be >= 1");
  if (config.fold_index < 0 || config.fold_index >= config.folds) {
    throw ConfigError("fold_index must be in [0, folds)");
  }
  if (config.supervision == Supervision::kWeak) {
    corpus::validate_click_config(config.click_model);
  }
}

void write_report_csv(const std::string& path, const TrainReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "update,mean_return,metric,L_I,L_F,grad_norm,seconds\n";
  for (const UpdateRow& r : report.rows) {
    out << r.update << ',' << textio::format_double(r.mean_return) << ','
        << textio::format_double(r.metric) << ',' << textio::format_double(r.inverse_loss) << ','
        << textio::format_double(r.forward_loss) << ',' << textio::format_double(r.grad_norm)
        << ',' << textio::format_fixed(r.seconds, 3) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

FoldSplit split_folds(std::size_t count, int folds, int fold_index) {
  if (folds < 1) throw ConfigError("folds must be >= 1");
  if (fold_index < 0 || fold_index >= folds) throw ConfigError("fold_index must be in [0, folds)");
  FoldSplit split;
  for (std::size_t i = 0; i < count; ++i) {
    if (folds > 1 && static_cast<int>(i % static_cast<std::size_t>(folds)) == fold_index) {
      split.held_out.push_back(i);
    } else {
      split.train.push_back(i);
    }
  }
  return split;
}

// learning_rate 0 is legal here (no-op steps); the training loop validates
// its own config separately and insists on a positive rate.
Optimizer::Optimizer(const nn::ParamStore& store, StepRule rule, double learning_rate)
    : rule_(rule), lr_(learning_rate) {
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be nonnegative");
  if (rule_ == StepRule::kAdam) {
    m_.reserve(static_cast<std::size_t>(store.count()));
    v_.reserve(static_cast<std::size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) {
      const std::vector<std::size_t>& shape = store.at(i).shape();
      m_.push_back(nn::Tensor::from(shape, std::vector<double>(store.at(i).size(), 0.0)));
      v_.push_back(nn::Tensor::from(shape, std::vector<double>(store.at(i).size(), 0.0)));
    }
  }
}

void Optimizer::step(nn::ParamStore& store, const nn::Gradients& grads) {
  if (grads.count() != store.count()) throw ArgumentError("gradient/store layout mismatch");
  if (rule_ == StepRule::kSgd) {
    for (int i = 0; i < store.count(); ++i) {
      std::vector<double>& p = store.at(i).raw();
      const std::vector<double>& g = grads.at(i).raw();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * g[k];
    }
    return;
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++t_;
  double c1 = 1.0 - std::pow(kBeta1, t_);
  double c2 = 1.0 - std::pow(kBeta2, t_);
  for (int i = 0; i < store.count(); ++i) {
    std::vector<double>& p = store.at(i).raw();
    const std::vector<double>& g = grads.at(i).raw();
    std::vector<double>& m = m_[static_cast<std::size_t>(i)].raw();
    std::vector<double>& v = v_[static_cast<std::size_t>(i)].raw();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps);
    }
  }
}

std::vector<double> returns_from_rewards(const std::vector<double>& rewards) {
  std::vector<double> returns(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc += rewards[t];
    returns[t] = acc;
  }
  return returns;
}

std::vector<double> weak_reward(const env::EpisodeTrace& trace, const corpus::ClickLog& log,
                                bool rank_discount) {
  if (log.impressions.size() != log.clicks.size()) {
    throw ArgumentError("click log impressions and clicks differ in length");
  }
  std::vector<double> rewards;
  rewards.reserve(trace.steps.size());
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const std::string& id = trace.steps[t].item_id;
    auto it = std::find(log.impressions.begin(), log.impressions.end(), id);
    if (it == log.impressions.end()) {
      throw ArgumentError("placed item '" + id + "' is missing from the click log of " +
                          trace.query_id);
    }
    bool clicked = log.clicks[static_cast<std::size_t>(it - log.impressions.begin())] != 0;
    double r = 0.0;
    if (clicked) {
      r = rank_discount ? 1.0 / std::log2(static_cast<double>(t) + 2.0) : 1.0;
    }
    rewards.push_back(r);
  }
  return rewards;
}

corpus::ClickLog clicks_for_trace(const corpus::QueryRecord& query,
                                  const corpus::DatasetSchema& schema,
                                  const env::EpisodeTrace& trace,
                                  const corpus::ClickModelConfig& model, Rng& rng) {
  std::vector<metrics::RankedItemGain> gains = env::trace_gains(query, schema, trace);
  std::vector<int> grades;
  grades.reserve(gains.size());
  for (const metrics::RankedItemGain& g : gains) grades.push_back(g.gain);
  corpus::ClickLog log;
  log.query_id = query.query_id;
  for (const env::TraceStep& s : trace.steps) log.impressions.push_back(s.item_id);
  log.clicks = corpus::simulate_clicks(grades, model, rng);
  return log;
}

NodeId episode_objective(env::Rollout& rollout, std::span<const double> step_weights,
                         const ssl::SslLossNodes* ssl_nodes, double inverse_weight,
                         double forward_weight) {
  if (step_weights.size() != rollout.log_prob_nodes.size()) {
    throw ArgumentError("step weight count does not match the episode length");
  }
  std::vector<NodeId> scalars(rollout.log_prob_nodes.begin(), rollout.log_prob_nodes.end());
  std::vector<double> coeffs(step_weights.begin(), step_weights.end());
  if (ssl_nodes != nullptr) {
    scalars.push_back(ssl_nodes->inverse);
    coeffs.push_back(-inverse_weight);
    scalars.push_back(ssl_nodes->forward);
    coeffs.push_back(-forward_weight);
  }
  if (scalars.empty()) throw ArgumentError("episode with no steps has no objective");
  return rollout.tape.weighted_sum(scalars, coeffs);
}

void policy_gradient(std::vector<env::Rollout>& batch,
                     const std::vector<std::vector<double>>& rewards, BaselineMode baseline,
                     nn::Gradients& grads) {
  if (batch.empty()) throw ArgumentError("policy gradient over an empty batch");
  if (rewards.size() != batch.size()) {
    throw ArgumentError("reward sequences do not match the batch");
  }
  std::vector<std::vector<double>> returns;
  returns.reserve(batch.size());
  double b = 0.0;
  for (const std::vector<double>& r : rewards) {
    returns.push_back(returns_from_rewards(r));
    if (!returns.back().empty()) b += returns.back().front();
  }
  b = baseline == BaselineMode::kBatchMean ? b / static_cast<double>(batch.size()) : 0.0;

  double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    std::vector<double> w = returns[e];
    for (double& x : w) x -= b;
    NodeId obj = episode_objective(batch[e], w, nullptr, 0.0, 0.0);
    batch[e].tape.backward(obj, grads, -inv_batch);
  }
}

double forward_head_norm(const nn::ParamStore& store) {
  if (!store.contains("ssl.forward.w")) return 0.0;
  double s = nn::squared_norm(store.at("ssl.forward.w").raw()) +
             nn::squared_norm(store.at("ssl.forward.b").raw());
  return std::sqrt(s);
}

struct Trainer::EpisodeWork {
  env::Rollout rollout;
  std::vector<double> returns;
  double episode_return = 0.0;
  double terminal_metric = 0.0;
  double l_i = 0.0;
  double l_f = 0.0;
  ssl::SslLossNodes ssl_nodes;
  bool has_ssl = false;
  nn::Gradients grads;

  EpisodeWork(env::Rollout r, const nn::ParamStore& store)
      : rollout(std::move(r)), grads(store) {}
};

Trainer::Trainer(const corpus::DatasetSchema& schema, std::vector<corpus::QueryRecord> queries,
                 const TrainConfig& config)
    : schema_(schema), queries_(std::move(queries)), config_(config), params_() {
  validate_train_config(config_);
  init_ids(true);
}

Trainer::Trainer(const corpus::DatasetSchema& schema, std::vector<corpus::QueryRecord> queries,
                 const TrainConfig& config, nn::ParamStore params)
    : schema_(schema), queries_(std::move(queries)), config_(config), params_(std::move(params)) {
  validate_train_config(config_);
  init_ids(false);
}

void Trainer::init_ids(bool fresh) {
  if (config_.alpha != schema_.alpha) {
    throw ConfigError("configured alpha " + std::to_string(config_.alpha) +
                      " does not match the dataset's " + std::to_string(schema_.alpha));
  }
  if (fresh) {
    Rng init_rng(derive_seed(config_.seed, 0x1417u));
    policy::PolicyConfig pc;
    pc.alpha = config_.alpha;
    pc.gru_mode = config_.gru_mode;
    policy_ids_ = policy::init_policy_params(params_, schema_, pc, init_rng);
    ssl_ids_ = ssl::init_ssl_params(params_, config_.alpha,
                                    static_cast<int>(schema_.verticals.size()), init_rng);
  } else {
    policy_ids_ = policy::resolve_policy_params(params_, schema_);
    ssl_ids_ = ssl::resolve_ssl_params(params_, config_.alpha,
                                       static_cast<int>(schema_.verticals.size()));
    bool dual = config_.gru_mode == policy::GruMode::kDual;
    if (policy_ids_.dual != dual) {
      throw ConfigError("checkpoint GRU layout does not match the configured gru_mode");
    }
  }
  // Table-style sampler swaps apply at evaluation time only; training
  // always ranks its own context unless context is disabled outright.
  rollout_context_mode_ = config_.context_mode == env::ContextMode::kNone
                              ? env::ContextMode::kNone
                              : env::ContextMode::kPolicy;
}

void Trainer::set_click_logs(const std::vector<corpus::ClickLog>& logs) {
  click_logs_.clear();
  for (const corpus::ClickLog& log : logs) {
    if (!click_logs_.emplace(log.query_id, log).second) {
      throw DataError("duplicate click log for query " + log.query_id);
    }
  }
}

std::unique_ptr<Trainer::EpisodeWork> Trainer::roll_one(const corpus::QueryRecord& query,
                                                        int update, int episode) const {
  env::EpisodeConfig ec;
  ec.reward = config_.reward;
  ec.target_length = config_.target_length;
  ec.context_length = config_.context_length;
  ec.context_mode = rollout_context_mode_;
  Rng rng(derive_seed(config_.seed, static_cast<std::uint64_t>(update),
                      static_cast<std::uint64_t>(episode)));
  env::Rollout rollout = env::run_episode(query, schema_, params_, policy_ids_, ec,
                                          env::SelectMode::kSample, &rng);
  auto work = std::make_unique<EpisodeWork>(std::move(rollout), params_);
  work->terminal_metric = work->rollout.trace.terminal_metric;

  std::vector<double> rewards;
  if (config_.supervision == Supervision::kFull) {
    for (const env::TraceStep& s : work->rollout.trace.steps) rewards.push_back(s.reward);
  } else {
    auto it = click_logs_.find(query.query_id);
    corpus::ClickLog log;
    if (it != click_logs_.end()) {
      log = it->second;
    } else if (!click_logs_.empty()) {
      throw DataError("no click log for query " + query.query_id);
    } else {
      log = clicks_for_trace(query, schema_, work->rollout.trace, config_.click_model, rng);
    }
    rewards = weak_reward(work->rollout.trace, log, config_.weak_rank_discount);
  }
  work->returns = returns_from_rewards(rewards);
  work->episode_return = work->returns.empty() ? 0.0 : work->returns.front();

  if (config_.ssl_enabled) {
    work->ssl_nodes = ssl::add_episode_losses(work->rollout, ssl_ids_);
    work->has_ssl = true;
    work->l_i = work->rollout.tape.scalar(work->ssl_nodes.inverse);
    work->l_f = work->rollout.tape.scalar(work->ssl_nodes.forward);
  }
  return work;
}

void Trainer::backprop_one(EpisodeWork& work, double baseline, int batch_size) const {
  std::vector<double> w = work.returns;
  for (double& x : w) x -= baseline;
  NodeId obj = episode_objective(work.rollout, w, work.has_ssl ? &work.ssl_nodes : nullptr,
                                 config_.inverse_weight, config_.forward_weight);
  work.rollout.tape.backward(obj, work.grads, -1.0 / static_cast<double>(batch_size));
}

namespace {

// Strided parallel loop; inline when a single worker suffices. The first
// worker exception is rethrown on the calling thread after the join.
void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  int workers = std::min(threads, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

TrainReport Trainer::train(const RowCallback& on_row) {
  if (queries_.empty()) throw ArgumentError("training over an empty query set");
  TrainReport report;
  Optimizer opt(params_, config_.step_rule, config_.learning_rate);
  Rng shuffle_rng(derive_seed(config_.seed, 0xba7c4u));
  std::vector<std::size_t> order(queries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();  // forces a shuffle before the first batch

  int batch = config_.episodes_per_batch;
  for (int update = 1; update <= config_.max_updates; ++update) {
    auto started = std::chrono::steady_clock::now();
    std::vector<const corpus::QueryRecord*> picks(static_cast<std::size_t>(batch));
    for (int e = 0; e < batch; ++e) {
      if (cursor == order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      picks[static_cast<std::size_t>(e)] = &queries_[order[cursor++]];
    }

    std::vector<std::unique_ptr<EpisodeWork>> work(static_cast<std::size_t>(batch));
    parallel_for(batch, config_.threads, [&](int e) {
      work[static_cast<std::size_t>(e)] = roll_one(*picks[static_cast<std::size_t>(e)], update, e);
    });

    double baseline = 0.0;
    if (config_.baseline == BaselineMode::kBatchMean) {
      for (const auto& w : work) baseline += w->episode_return;
      baseline /= static_cast<double>(batch);
    }
    parallel_for(batch, config_.threads, [&](int e) {
      backprop_one(*work[static_cast<std::size_t>(e)], baseline, batch);
    });

    nn::Gradients total(params_);
    UpdateRow row;
    row.update = update;
    for (const auto& w : work) {
      total.add_scaled(w->grads, 1.0);
      row.mean_return += w->episode_return;
      row.metric += w->terminal_metric;
      row.inverse_loss += w->l_i;
      row.forward_loss += w->l_f;
    }
    row.mean_return /= static_cast<double>(batch);
    row.metric /= static_cast<double>(batch);
    row.inverse_loss /= static_cast<double>(batch);
    row.forward_loss /= static_cast<double>(batch);
    row.grad_norm = std::sqrt(total.squared_norm());

    if (!total.all_finite()) {
      ++report.skipped_updates;
      opt.halve_learning_rate();
      std::fprintf(stderr, "warning: non-finite gradient at update %d, step size halved to %g\n",
                   update, opt.learning_rate());
    } else {
      opt.step(params_, total);
    }

    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.rows.push_back(row);
    if (on_row) on_row(row);
  }
  report.final_learning_rate = opt.learning_rate();
  report.forward_head_norm = forward_head_norm(params_);
  return report;
}

RankerKind parse_ranker(const std::string& text) {
  if (text == "policy") return RankerKind::kPolicy;
  if (text == "oracle") return RankerKind::kOracle;
  if (text == "random") return RankerKind::kRandom;
  throw ConfigError("unknown ranker: '" + text + "' (expected policy, oracle, or random)");
}

namespace {

// Reference rankings: true-gain ordering for the oracle, a seeded shuffle
// for the random floor. Ties and shuffles resolve by candidate id.
std::vector<std::size_t> reference_order(const std::vector<env::Candidate>& cands,
                                         RankerKind kind, Rng* rng) {
  std::vector<std::size_t> idx(cands.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (kind == RankerKind::kOracle) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (cands[a].gain.gain != cands[b].gain.gain) return cands[a].gain.gain > cands[b].gain.gain;
      return cands[a].id < cands[b].id;
    });
  } else {
    rng->shuffle(idx);
  }
  return idx;
}

}  // namespace

EvalReport evaluate(const corpus::DatasetSchema& schema,
                    const std::vector<corpus::QueryRecord>& queries,
                    const nn::ParamStore& store, const policy::PolicyParamIds& ids,
                    const env::EpisodeConfig& episode,
                    const std::vector<metrics::MetricSpec>& specs, RankerKind kind,
                    std::uint64_t seed, std::vector<env::EpisodeTrace>* traces_out) {
  if (specs.empty()) throw ArgumentError("evaluation needs at least one metric");
  EvalReport report;
  report.specs = specs;
  report.means.assign(specs.size(), 0.0);

  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const corpus::QueryRecord& query = queries[qi];
    std::vector<env::Candidate> cands = env::candidates_of(query, schema);
    std::vector<int> pool = env::gain_pool(cands);

    std::vector<metrics::RankedItemGain> placed;
    env::EpisodeTrace trace;
    trace.query_id = query.query_id;
    if (kind == RankerKind::kPolicy) {
      env::EpisodeConfig ec = episode;
      ec.reward = specs.front();
      ec.context_seed = derive_seed(seed, qi);
      env::Rollout rollout =
          env::run_episode(query, schema, store, ids, ec, env::SelectMode::kGreedy, nullptr);
      trace = std::move(rollout.trace);
      placed = env::trace_gains(query, schema, trace);
    } else {
      Rng rng(derive_seed(seed, qi, 1));
      std::vector<std::size_t> order = reference_order(cands, kind, &rng);
      std::size_t take = std::min(order.size(), static_cast<std::size_t>(episode.target_length));
      for (std::size_t k = 0; k < take; ++k) {
        const env::Candidate& c = cands[order[k]];
        placed.push_back(c.gain);
        env::TraceStep ts;
        ts.item_id = c.id;
        ts.is_module = c.is_module;
        ts.vertical_id = c.vertical_id;
        trace.steps.push_back(std::move(ts));
      }
      trace.terminal_metric = metrics::serp_value(placed, pool, specs.front());
      trace.total_return = trace.terminal_metric;
    }

    report.query_ids.push_back(query.query_id);
    std::vector<double> row;
    row.reserve(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
      double v = metrics::serp_value(placed, pool, specs[s]);
      row.push_back(v);
      report.means[s] += v;
    }
    report.values.push_back(std::move(row));
    if (traces_out != nullptr) traces_out->push_back(std::move(trace));
  }
  report.std_errors.assign(specs.size(), 0.0);
  const std::size_t n = queries.size();
  if (n > 0) {
    for (double& m : report.means) m /= static_cast<double>(n);
  }
  if (n > 1) {
    for (std::size_t s = 0; s < specs.size(); ++s) {
      double ss = 0.0;
      for (std::size_t q = 0; q < n; ++q) {
        double d = report.values[q][s] - report.means[s];
        ss += d * d;
      }
      report.std_errors[s] = std::sqrt(ss / static_cast<double>(n - 1)) /
                             std::sqrt(static_cast<double>(n));
    }
  }
  return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "query_id";
  for (const metrics::MetricSpec& spec : report.specs) out << ',' << metrics::metric_name(spec);
  out << '\n';
  for (std::size_t q = 0; q < report.query_ids.size(); ++q) {
    out << report.query_ids[q];
    for (double v : report.values[q]) out << ',' << textio::format_double(v);
    out << '\n';
  }
  out << "mean";
  for (double m : report.means) out << ',' << textio::format_double(m);
  out << '\n';
  out << "stderr";
  for (double se : report.std_errors) out << ',' << textio::format_double(se);
  out << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace aggrank::train
