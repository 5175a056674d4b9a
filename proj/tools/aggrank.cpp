#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aggrank/config.hpp"
#include "aggrank/corpus.hpp"
#include "aggrank/env.hpp"
#include "aggrank/error.hpp"
#include "aggrank/metrics.hpp"
#include "aggrank/policy.hpp"
#include "aggrank/ssl.hpp"
#include "aggrank/textio.hpp"
#include "aggrank/trainer.hpp"

#ifndef AGGRANK_BUILD_ID
#define AGGRANK_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace aggrank;

namespace {

std::string default_data_dir() {
  const char* v = std::getenv("AGGRANK_DATA_DIR");
  return v == nullptr ? std::string() : std::string(v);
}

void require_data_dir(const std::string& dir) {
  if (dir.empty()) {
    throw UsageError("--data is required (or set AGGRANK_DATA_DIR)");
  }
}

struct Manifest {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;
  std::string started = textio::utc_timestamp();
};

void write_manifest(const std::string& out_dir, const Manifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  if (m.config_path.empty()) {
    j["config"] = nullptr;
  } else {
    j["config"] = m.config_path;
  }
  if (m.seed.has_value()) {
    j["seed"] = *m.seed;
  } else {
    j["seed"] = nullptr;
  }
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.inputs) inputs[k] = v;
  nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.outputs) outputs[k] = v;
  j["inputs"] = std::move(inputs);
  j["outputs"] = std::move(outputs);
  j["build_id"] = AGGRANK_BUILD_ID;
  j["started"] = m.started;
  j["finished"] = textio::utc_timestamp();
  std::string path = out_dir + "/manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

struct LoadedData {
  corpus::DatasetSchema schema;
  std::vector<corpus::QueryRecord> queries;
  std::string dataset_path;
};

LoadedData load_split(const std::string& data_dir, const std::string& split) {
  require_data_dir(data_dir);
  fs::path dir(data_dir);
  fs::path schema_path = dir / "schema.json";
  if (!fs::exists(schema_path)) {
    throw DataError("schema not found: " + schema_path.string());
  }
  LoadedData data;
  data.schema = corpus::load_schema(schema_path.string());
  fs::path file = dir / (split + ".jsonl");
  if (!fs::exists(file)) {
    throw DataError("dataset split not found: " + file.string());
  }
  data.queries = corpus::load_dataset(file.string(), data.schema);
  data.dataset_path = file.string();
  return data;
}

// The training sidecar pins the episode shape the checkpoint was built
// for; evaluation defaults to it when present.
std::optional<config::FileConfig> load_sidecar(const std::string& checkpoint_path) {
  fs::path p = fs::path(checkpoint_path).parent_path() / "train_config.json";
  if (!fs::exists(p)) return std::nullopt;
  return config::load(p.string());
}

void check_context_compat(env::ContextMode trained, env::ContextMode requested) {
  bool trained_off = trained == env::ContextMode::kNone;
  bool requested_off = requested == env::ContextMode::kNone;
  if (trained_off != requested_off) {
    throw ConfigError("checkpoint was trained with context_mode=" +
                      env::context_mode_name(trained) + "; context_mode=" +
                      env::context_mode_name(requested) + " cannot evaluate it");
  }
}

std::vector<metrics::MetricSpec> parse_metric_list(const std::string& text, int g_max) {
  std::vector<metrics::MetricSpec> specs;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string item =
        comma == std::string::npos ? text.substr(start) : text.substr(start, comma - start);
    if (!item.empty()) specs.push_back(metrics::parse_metric(item, g_max));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (specs.empty()) throw UsageError("--metrics needs at least one metric name");
  return specs;
}

int cmd_generate(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
                 std::optional<int> queries_override, std::optional<int> test_override) {
  Manifest manifest;
  manifest.command = "generate";
  manifest.config_path = config_path;
  manifest.seed = seed;

  config::FileConfig cfg = config::load(config_path);
  if (queries_override) cfg.synth.queries = *queries_override;
  if (test_override) cfg.synth.test_queries = *test_override;
  corpus::validate_synth_config(cfg.synth);
  corpus::SynthOutput out = corpus::generate_synthetic(cfg.synth, seed);

  fs::create_directories(out_dir);
  corpus::save_schema(out_dir + "/schema.json", out.schema);
  corpus::save_dataset(out_dir + "/train.jsonl", out.train);
  manifest.outputs.emplace_back("schema", out_dir + "/schema.json");
  manifest.outputs.emplace_back("train", out_dir + "/train.jsonl");
  if (cfg.synth.test_queries > 0) {
    corpus::save_dataset(out_dir + "/test.jsonl", out.test);
    manifest.outputs.emplace_back("test", out_dir + "/test.jsonl");
  }
  write_manifest(out_dir, manifest);
  std::printf("wrote %zu train / %zu test queries to %s\n", out.train.size(), out.test.size(),
              out_dir.c_str());
  return 0;
}

struct TrainFlags {
  std::string data_dir;
  std::string config_path;
  std::string out_dir;
  std::string supervision;
  std::string reward;
  std::string context_mode;
  std::string click_logs;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_updates;
  std::optional<int> threads;
  std::optional<int> folds;
  std::optional<int> fold_index;
};

int cmd_train(const TrainFlags& flags) {
  Manifest manifest;
  manifest.command = "train";
  manifest.config_path = flags.config_path;

  config::FileConfig cfg = config::load(flags.config_path);
  LoadedData data = load_split(flags.data_dir, "train");
  manifest.inputs.emplace_back("data", data.dataset_path);

  cfg.train.reward.g_max = data.schema.g_max;
  if (!flags.supervision.empty()) {
    cfg.train.supervision = train::parse_supervision(flags.supervision);
  }
  if (!flags.reward.empty()) {
    cfg.train.reward = metrics::parse_metric(flags.reward, data.schema.g_max);
  }
  if (!flags.context_mode.empty()) {
    cfg.train.context_mode = env::parse_context_mode(flags.context_mode);
  }
  if (flags.seed) cfg.train.seed = *flags.seed;
  if (flags.max_updates) cfg.train.max_updates = *flags.max_updates;
  if (flags.threads) cfg.train.threads = *flags.threads;
  if (flags.folds) cfg.train.folds = *flags.folds;
  if (flags.fold_index) cfg.train.fold_index = *flags.fold_index;
  manifest.seed = cfg.train.seed;

  train::FoldSplit split =
      train::split_folds(data.queries.size(), cfg.train.folds, cfg.train.fold_index);
  std::vector<corpus::QueryRecord> subset;
  subset.reserve(split.train.size());
  for (std::size_t i : split.train) subset.push_back(data.queries[i]);

  train::Trainer trainer(data.schema, std::move(subset), cfg.train);
  if (!flags.click_logs.empty()) {
    trainer.set_click_logs(corpus::load_click_logs(flags.click_logs));
    manifest.inputs.emplace_back("click_logs", flags.click_logs);
  }

  int total = cfg.train.max_updates;
  train::TrainReport report = trainer.train([total](const train::UpdateRow& row) {
    if (row.update % 25 == 0 || row.update == total) {
      std::fprintf(stderr, "update %d/%d return %.4f metric %.4f\n", row.update, total,
                   row.mean_return, row.metric);
    }
  });

  fs::create_directories(flags.out_dir);
  std::string report_path = flags.out_dir + "/report.csv";
  std::string checkpoint_path = flags.out_dir + "/checkpoint.json";
  std::string sidecar_path = flags.out_dir + "/train_config.json";
  train::write_report_csv(report_path, report);
  trainer.params().save(checkpoint_path);
  {
    std::ofstream side(sidecar_path, std::ios::binary);
    if (!side) throw IoError("cannot open for writing: " + sidecar_path);
    side << config::dump(cfg);
  }
  manifest.outputs.emplace_back("report", report_path);
  manifest.outputs.emplace_back("checkpoint", checkpoint_path);
  manifest.outputs.emplace_back("train_config", sidecar_path);
  write_manifest(flags.out_dir, manifest);

  double last_metric = report.rows.empty() ? 0.0 : report.rows.back().metric;
  std::printf("trained %zu updates (skipped %d), final metric %s, checkpoint %s\n",
              report.rows.size(), report.skipped_updates,
              textio::format_double(last_metric).c_str(), checkpoint_path.c_str());
  return 0;
}

struct EvalFlags {
  std::string data_dir;
  std::string checkpoint;
  std::string metrics = "ndcg@5,ndcg@10,as_dcg@10,as_err@10";
  std::string split = "test";
  std::string ranker = "policy";
  bool oracle = false;
  std::string context_mode;
  std::string out_dir;
  std::string trace_out;
  std::uint64_t seed = 1;
  std::optional<int> target_length;
  std::optional<int> folds;
  std::optional<int> fold_index;
};

int cmd_eval(const EvalFlags& flags) {
  Manifest manifest;
  manifest.command = "eval";
  manifest.seed = flags.seed;

  LoadedData data = load_split(flags.data_dir, flags.split);
  manifest.inputs.emplace_back("data", data.dataset_path);
  manifest.inputs.emplace_back("checkpoint", flags.checkpoint);

  nn::ParamStore store = nn::ParamStore::load(flags.checkpoint);
  policy::PolicyParamIds ids = policy::resolve_policy_params(store, data.schema);

  env::EpisodeConfig ec;
  std::optional<config::FileConfig> sidecar = load_sidecar(flags.checkpoint);
  if (sidecar) {
    ec.target_length = sidecar->train.target_length;
    ec.context_length = sidecar->train.context_length;
    ec.context_mode = sidecar->train.context_mode;
  }
  if (flags.target_length) ec.target_length = *flags.target_length;
  if (!flags.context_mode.empty()) {
    env::ContextMode requested = env::parse_context_mode(flags.context_mode);
    if (sidecar) check_context_compat(sidecar->train.context_mode, requested);
    ec.context_mode = requested;
  }

  std::vector<metrics::MetricSpec> specs = parse_metric_list(flags.metrics, data.schema.g_max);
  ec.reward = specs.front();

  train::RankerKind kind =
      flags.oracle ? train::RankerKind::kOracle : train::parse_ranker(flags.ranker);

  std::vector<corpus::QueryRecord> subset;
  if (flags.folds && *flags.folds > 1) {
    train::FoldSplit split =
        train::split_folds(data.queries.size(), *flags.folds, flags.fold_index.value_or(0));
    for (std::size_t i : split.held_out) subset.push_back(data.queries[i]);
  } else {
    subset = data.queries;
  }

  std::vector<env::EpisodeTrace> traces;
  train::EvalReport report =
      train::evaluate(data.schema, subset, store, ids, ec, specs, kind, flags.seed,
                      flags.trace_out.empty() ? nullptr : &traces);

  fs::create_directories(flags.out_dir);
  std::string csv_path = flags.out_dir + "/eval.csv";
  train::write_eval_csv(csv_path, report);
  manifest.outputs.emplace_back("eval", csv_path);

  nlohmann::ordered_json summary;
  summary["ranker"] = flags.oracle ? "oracle" : flags.ranker;
  summary["split"] = flags.split;
  summary["queries"] = report.query_ids.size();
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  nlohmann::ordered_json errs = nlohmann::ordered_json::object();
  for (std::size_t s = 0; s < report.specs.size(); ++s) {
    means[metrics::metric_name(report.specs[s])] = report.means[s];
    errs[metrics::metric_name(report.specs[s])] = report.std_errors[s];
  }
  summary["means"] = std::move(means);
  summary["std_errors"] = std::move(errs);
  std::string json_path = flags.out_dir + "/eval.json";
  {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + json_path);
    out << summary.dump(2) << "\n";
  }
  manifest.outputs.emplace_back("summary", json_path);

  if (!flags.trace_out.empty()) {
    env::write_traces(flags.trace_out, traces);
    manifest.outputs.emplace_back("traces", flags.trace_out);
  }
  write_manifest(flags.out_dir, manifest);

  for (std::size_t s = 0; s < report.specs.size(); ++s) {
    std::printf("%s %s\n", metrics::metric_name(report.specs[s]).c_str(),
                textio::format_double(report.means[s]).c_str());
  }
  return 0;
}

struct RankFlags {
  std::string data_dir;
  std::string checkpoint;
  std::string query_id;
  std::string split = "train";
  bool explain = false;
  std::optional<int> target_length;
};

int cmd_rank(const RankFlags& flags) {
  LoadedData data = load_split(flags.data_dir, flags.split);
  const corpus::QueryRecord* query = nullptr;
  for (const corpus::QueryRecord& q : data.queries) {
    if (q.query_id == flags.query_id) {
      query = &q;
      break;
    }
  }
  if (query == nullptr) {
    throw DataError("query id '" + flags.query_id + "' not found in " + data.dataset_path);
  }

  nn::ParamStore store = nn::ParamStore::load(flags.checkpoint);
  policy::PolicyParamIds ids = policy::resolve_policy_params(store, data.schema);

  env::EpisodeConfig ec;
  std::optional<config::FileConfig> sidecar = load_sidecar(flags.checkpoint);
  if (sidecar) {
    ec.target_length = sidecar->train.target_length;
    ec.context_length = sidecar->train.context_length;
    ec.context_mode = sidecar->train.context_mode;
  }
  if (flags.target_length) ec.target_length = *flags.target_length;

  env::Rollout rollout = env::run_episode(*query, data.schema, store, ids, ec,
                                          env::SelectMode::kGreedy, nullptr);
  for (std::size_t t = 0; t < rollout.trace.steps.size(); ++t) {
    const env::TraceStep& step = rollout.trace.steps[t];
    std::printf("%zu %s\n", t + 1, step.item_id.c_str());
    if (flags.explain) {
      std::string line = "  probs:";
      for (std::size_t c = 0; c < step.candidate_ids.size(); ++c) {
        line += " " + step.candidate_ids[c] + "=" + textio::format_double(step.probs[c]);
      }
      std::printf("%s\n", line.c_str());
    }
  }
  if (flags.explain) {
    for (std::size_t m = 0; m < query->modules.size(); ++m) {
      const corpus::ModuleRecord& mod = query->modules[m];
      const std::vector<double>& weights = rollout.setup.module_attention[m];
      if (weights.empty()) continue;
      std::string line = "attention " + data.schema.vertical(mod.vertical_id).name + " " +
                         mod.module_id + ":";
      for (std::size_t j = 0; j < weights.size(); ++j) {
        line += " " + rollout.trace.context_ids[j] + "=" + textio::format_double(weights[j]);
      }
      std::printf("%s\n", line.c_str());
    }
  }
  return 0;
}

struct ClickFlags {
  std::string data_dir;
  std::string checkpoint;
  std::string click_config;
  std::string split = "train";
  std::string out_dir;
  std::uint64_t seed = 1;
};

int cmd_simulate_clicks(const ClickFlags& flags) {
  Manifest manifest;
  manifest.command = "simulate-clicks";
  manifest.config_path = flags.click_config;
  manifest.seed = flags.seed;

  config::FileConfig cfg = config::load(flags.click_config);
  corpus::validate_click_config(cfg.click_model);
  LoadedData data = load_split(flags.data_dir, flags.split);
  manifest.inputs.emplace_back("data", data.dataset_path);
  manifest.inputs.emplace_back("checkpoint", flags.checkpoint);

  nn::ParamStore store = nn::ParamStore::load(flags.checkpoint);
  policy::PolicyParamIds ids = policy::resolve_policy_params(store, data.schema);

  env::EpisodeConfig ec;
  std::optional<config::FileConfig> sidecar = load_sidecar(flags.checkpoint);
  if (sidecar) {
    ec.context_length = sidecar->train.context_length;
    ec.context_mode = sidecar->train.context_mode;
  }

  std::vector<corpus::ClickLog> logs;
  std::size_t clicks_total = 0;
  for (std::size_t qi = 0; qi < data.queries.size(); ++qi) {
    const corpus::QueryRecord& query = data.queries[qi];
    env::EpisodeConfig qec = ec;
    // the base ranker exposes every candidate so later replays can look
    // any placed item up by id
    qec.target_length =
        static_cast<int>(query.blue_links.size() + query.modules.size());
    env::Rollout rollout =
        env::run_episode(query, data.schema, store, ids, qec, env::SelectMode::kGreedy, nullptr);
    Rng rng(derive_seed(flags.seed, qi, 0xc11c));
    corpus::ClickLog log =
        train::clicks_for_trace(query, data.schema, rollout.trace, cfg.click_model, rng);
    for (std::uint8_t c : log.clicks) clicks_total += c;
    logs.push_back(std::move(log));
  }

  fs::create_directories(flags.out_dir);
  std::string path = flags.out_dir + "/clicks.jsonl";
  corpus::save_click_logs(path, logs);
  manifest.outputs.emplace_back("clicks", path);
  write_manifest(flags.out_dir, manifest);
  std::printf("wrote %zu click logs (%zu clicks) to %s\n", logs.size(), clicks_total,
              path.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"aggregated SERP construction: synthetic corpora, policy training, evaluation"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the full default config and exit");

  std::string gen_config;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  int gen_queries = -1;
  int gen_test_queries = -1;
  CLI::App* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  gen->add_option("--config", gen_config, "config file")->required();
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--queries", gen_queries, "override synth.queries");
  gen->add_option("--test-queries", gen_test_queries, "override synth.test_queries");

  TrainFlags tf;
  tf.data_dir = default_data_dir();
  std::uint64_t tf_seed = 0;
  int tf_max_updates = 0;
  int tf_threads = 0;
  int tf_folds = 0;
  int tf_fold_index = 0;
  CLI::App* tr = app.add_subcommand("train", "train a ranking policy");
  tr->add_option("--data", tf.data_dir, "dataset directory");
  tr->add_option("--config", tf.config_path, "config file")->required();
  tr->add_option("--out", tf.out_dir, "output directory")->required();
  tr->add_option("--supervision", tf.supervision, "full or weak");
  tr->add_option("--reward", tf.reward, "reward metric, e.g. as_dcg@10");
  tr->add_option("--context-mode", tf.context_mode, "policy, random, oracle, or none");
  tr->add_option("--click-logs", tf.click_logs, "replay clicks from this log file");
  CLI::Option* o_seed = tr->add_option("--seed", tf_seed, "training seed");
  CLI::Option* o_upd = tr->add_option("--max-updates", tf_max_updates, "gradient update count");
  CLI::Option* o_thr = tr->add_option("--threads", tf_threads, "rollout worker threads");
  CLI::Option* o_folds = tr->add_option("--folds", tf_folds, "cross-validation fold count");
  CLI::Option* o_fidx = tr->add_option("--fold-index", tf_fold_index, "held-out fold");

  EvalFlags ef;
  ef.data_dir = default_data_dir();
  int ef_target = 0;
  int ef_folds = 0;
  int ef_fidx = 0;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--data", ef.data_dir, "dataset directory");
  ev->add_option("--checkpoint", ef.checkpoint, "checkpoint file")->required();
  ev->add_option("--metrics", ef.metrics, "comma-separated metric list");
  ev->add_option("--split", ef.split, "train or test");
  ev->add_option("--ranker", ef.ranker, "policy, oracle, or random");
  ev->add_flag("--oracle", ef.oracle, "rank by true gain instead of the policy");
  ev->add_option("--context-mode", ef.context_mode, "context sampler override");
  ev->add_option("--out", ef.out_dir, "output directory")->required();
  ev->add_option("--trace-out", ef.trace_out, "write ranking traces to this JSONL file");
  ev->add_option("--seed", ef.seed, "evaluation seed");
  CLI::Option* e_target = ev->add_option("--target-length", ef_target, "ranking length");
  CLI::Option* e_folds = ev->add_option("--folds", ef_folds, "cross-validation fold count");
  CLI::Option* e_fidx = ev->add_option("--fold-index", ef_fidx, "held-out fold");

  RankFlags rf;
  rf.data_dir = default_data_dir();
  int rf_target = 0;
  CLI::App* rk = app.add_subcommand("rank", "rank one query");
  rk->add_option("--data", rf.data_dir, "dataset directory");
  rk->add_option("--checkpoint", rf.checkpoint, "checkpoint file")->required();
  rk->add_option("--query-id", rf.query_id, "query to rank")->required();
  rk->add_option("--split", rf.split, "train or test");
  rk->add_flag("--explain", rf.explain, "print action probabilities and attention weights");
  CLI::Option* r_target = rk->add_option("--target-length", rf_target, "ranking length");

  ClickFlags cf;
  cf.data_dir = default_data_dir();
  CLI::App* ck = app.add_subcommand("simulate-clicks", "simulate clicks with a base ranker");
  ck->add_option("--data", cf.data_dir, "dataset directory");
  ck->add_option("--checkpoint", cf.checkpoint, "base ranker checkpoint")->required();
  ck->add_option("--click-config", cf.click_config, "config file with the click model")
      ->required();
  ck->add_option("--split", cf.split, "train or test");
  ck->add_option("--out", cf.out_dir, "output directory")->required();
  ck->add_option("--seed", cf.seed, "simulation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (print_config) {
    std::cout << config::dump(config::defaults());
    return 0;
  }

  if (*gen) {
    std::optional<int> q;
    std::optional<int> tq;
    if (gen->count("--queries")) q = gen_queries;
    if (gen->count("--test-queries")) tq = gen_test_queries;
    return cmd_generate(gen_config, gen_seed, gen_out, q, tq);
  }
  if (*tr) {
    if (o_seed->count()) tf.seed = tf_seed;
    if (o_upd->count()) tf.max_updates = tf_max_updates;
    if (o_thr->count()) tf.threads = tf_threads;
    if (o_folds->count()) tf.folds = tf_folds;
    if (o_fidx->count()) tf.fold_index = tf_fold_index;
    return cmd_train(tf);
  }
  if (*ev) {
    if (e_target->count()) ef.target_length = ef_target;
    if (e_folds->count()) ef.folds = ef_folds;
    if (e_fidx->count()) ef.fold_index = ef_fidx;
    return cmd_eval(ef);
  }
  if (*rk) {
    if (r_target->count()) rf.target_length = rf_target;
    return cmd_rank(rf);
  }
  if (*ck) return cmd_simulate_clicks(cf);

  std::cerr << app.help();
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
