#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aggrank/corpus.hpp"
#include "aggrank/env.hpp"
#include "aggrank/metrics.hpp"
#include "aggrank/params.hpp"
#include "aggrank/policy.hpp"
#include "aggrank/ssl.hpp"

namespace aggrank::train {

enum class StepRule { kAdam, kSgd };
enum class Supervision { kFull, kWeak };
enum class BaselineMode { kBatchMean, kNone };

StepRule parse_step_rule(const std::string& text);
Supervision parse_supervision(const std::string& text);
BaselineMode parse_baseline(const std::string& text);
std::string step_rule_name(StepRule rule);
std::string supervision_name(Supervision s);
std::string baseline_name(BaselineMode b);

struct TrainConfig {
  metrics::MetricSpec reward;
  Supervision supervision = Supervision::kFull;
  corpus::ClickModelConfig click_model;  // weak-supervision click simulator
  bool weak_rank_discount = false;       // 1/log2(rank+1) per click instead of 1
  int episodes_per_batch = 16;
  int max_updates = 200;
  double learning_rate = 0.05;
  StepRule step_rule = StepRule::kAdam;
  BaselineMode baseline = BaselineMode::kBatchMean;
  bool ssl_enabled = true;
  double inverse_weight = 1.0;
  double forward_weight = 1.0;
  policy::GruMode gru_mode = policy::GruMode::kUni;
  env::ContextMode context_mode = env::ContextMode::kPolicy;
  int context_length = 10;
  int target_length = 10;
  int alpha = 32;
  std::uint64_t seed = 1;
  int threads = 1;
  int folds = 1;       // 1 disables the fold split
  int fold_index = 0;  // held-out fold, 0-based
};

void validate_train_config(const TrainConfig& config);

struct UpdateRow {
  int update = 0;  // 1-based
  double mean_return = 0.0;
  double metric = 0.0;  // batch mean terminal metric under the reward spec
  double inverse_loss = 0.0;
  double forward_loss = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<UpdateRow> rows;
  int skipped_updates = 0;
  double final_learning_rate = 0.0;
  double forward_head_norm = 0.0;
};

// Header: update,mean_return,metric,L_I,L_F,grad_norm,seconds
void write_report_csv(const std::string& path, const TrainReport& report);

// Round-robin fold split; fold_index picks the held-out residue class.
struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> held_out;
};
FoldSplit split_folds(std::size_t count, int folds, int fold_index);

class Optimizer {
 public:
  Optimizer(const nn::ParamStore& store, StepRule rule, double learning_rate);

  double learning_rate() const { return lr_; }
  void halve_learning_rate() { lr_ *= 0.5; }

  // One minimizing step; grads must be aligned with store.
  void step(nn::ParamStore& store, const nn::Gradients& grads);

 private:
  StepRule rule_;
  double lr_;
  int t_ = 0;
  std::vector<nn::Tensor> m_;
  std::vector<nn::Tensor> v_;
};

// G_t = sum of rewards from t on (undiscounted suffix sums).
std::vector<double> returns_from_rewards(const std::vector<double>& rewards);

// Per-step click rewards for the trace's ranking: 1 per clicked item, or
// 1/log2(rank+1) with the rank discount. Items are matched to the log's
// impressions by id; a placed item missing from the log is an error.
std::vector<double> weak_reward(const env::EpisodeTrace& trace, const corpus::ClickLog& log,
                                bool rank_discount = false);

// Simulates clicks on the trace's ranking and wraps them as a log.
corpus::ClickLog clicks_for_trace(const corpus::QueryRecord& query,
                                  const corpus::DatasetSchema& schema,
                                  const env::EpisodeTrace& trace,
                                  const corpus::ClickModelConfig& model, Rng& rng);

// Composite per-episode objective appended to the rollout's tape:
// sum_t step_weights[t] * log pi_t, minus the weighted auxiliary losses
// when ssl_nodes is given. step_weights.size() must match the step count.
nn::NodeId episode_objective(env::Rollout& rollout, std::span<const double> step_weights,
                             const ssl::SslLossNodes* ssl_nodes, double inverse_weight,
                             double forward_weight);

// REINFORCE gradient of the batch-mean weighted log-likelihood, advantage
// weights G_t - b with b the batch-mean return when enabled. Consumes the
// rollouts' tapes; grads receives the descent direction.
void policy_gradient(std::vector<env::Rollout>& batch,
                     const std::vector<std::vector<double>>& rewards, BaselineMode baseline,
                     nn::Gradients& grads);

// ||theta_F|| of the forward prediction head; 0 when the head is absent.
double forward_head_norm(const nn::ParamStore& store);

class Trainer {
 public:
  // Fresh parameters drawn from config.seed.
  Trainer(const corpus::DatasetSchema& schema, std::vector<corpus::QueryRecord> queries,
          const TrainConfig& config);
  // Resumes from an existing parameter store.
  Trainer(const corpus::DatasetSchema& schema, std::vector<corpus::QueryRecord> queries,
          const TrainConfig& config, nn::ParamStore params);

  // Replayable click logs for weak supervision; without them clicks are
  // simulated on each rollout's ranking.
  void set_click_logs(const std::vector<corpus::ClickLog>& logs);

  using RowCallback = std::function<void(const UpdateRow&)>;
  TrainReport train(const RowCallback& on_row = {});

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const policy::PolicyParamIds& policy_ids() const { return policy_ids_; }
  const ssl::SslParamIds& ssl_ids() const { return ssl_ids_; }
  const corpus::DatasetSchema& schema() const { return schema_; }

 private:
  struct EpisodeWork;

  void init_ids(bool fresh);
  std::unique_ptr<EpisodeWork> roll_one(const corpus::QueryRecord& query, int update,
                                        int episode) const;
  void backprop_one(EpisodeWork& work, double baseline, int batch_size) const;

  corpus::DatasetSchema schema_;
  std::vector<corpus::QueryRecord> queries_;
  TrainConfig config_;
  nn::ParamStore params_;
  policy::PolicyParamIds policy_ids_;
  ssl::SslParamIds ssl_ids_;
  env::ContextMode rollout_context_mode_;
  std::unordered_map<std::string, corpus::ClickLog> click_logs_;
};

enum class RankerKind { kPolicy, kOracle, kRandom };
RankerKind parse_ranker(const std::string& text);

struct EvalReport {
  std::vector<metrics::MetricSpec> specs;
  std::vector<std::string> query_ids;
  std::vector<std::vector<double>> values;  // [query][spec]
  std::vector<double> means;                // [spec]
  std::vector<double> std_errors;           // [spec], sample sd / sqrt(n)
};

// Greedy policy decoding (or a reference ranker) over the queries, scored
// under every requested metric. The episode config supplies the target
// length and the context sampler; per-query seeds derive from seed.
EvalReport evaluate(const corpus::DatasetSchema& schema,
                    const std::vector<corpus::QueryRecord>& queries,
                    const nn::ParamStore& store, const policy::PolicyParamIds& ids,
                    const env::EpisodeConfig& episode,
                    const std::vector<metrics::MetricSpec>& specs, RankerKind kind,
                    std::uint64_t seed, std::vector<env::EpisodeTrace>* traces_out = nullptr);

// Per-query rows then `mean` and `stderr` rows; column per metric.
void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace aggrank::train
