#include "aggrank/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "aggrank/error.hpp"
#include "aggrank/metrics.hpp"

namespace aggrank::config {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
  throw ConfigError(where + ": " + msg);
}

void check_keys(const ordered_json& obj, const std::string& where,
                std::initializer_list<const char*> keys) {
  if (!obj.is_object()) bad(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) bad(where, "unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_int(const ordered_json& obj, const std::string& where, const char* key, T* out) {
  if (!obj.contains(key)) return;
  const ordered_json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    bad(where, std::string("'") + key + "' must be an integer");
  }
  *out = v.get<T>();
}

void read_double(const ordered_json& obj, const std::string& where, const char* key,
                 double* out) {
  if (!obj.contains(key)) return;
  const ordered_json& v = obj.at(key);
  if (!v.is_number()) bad(where, std::string("'") + key + "' must be a number");
  *out = v.get<double>();
}

void read_bool(const ordered_json& obj, const std::string& where, const char* key, bool* out) {
  if (!obj.contains(key)) return;
  const ordered_json& v = obj.at(key);
  if (!v.is_boolean()) bad(where, std::string("'") + key + "' must be a boolean");
  *out = v.get<bool>();
}

std::string read_string(const ordered_json& obj, const std::string& where, const char* key,
                        const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const ordered_json& v = obj.at(key);
  if (!v.is_string()) bad(where, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

void parse_synth(const ordered_json& obj, const std::string& where, corpus::SynthConfig* out) {
  check_keys(obj, where,
             {"alpha", "g_max", "verticals", "queries", "test_queries", "blue_links_per_query",
              "docs_per_module", "intent_signal", "query_signal", "relevant_fraction",
              "embedding_noise", "feature_noise", "topic_purity", "module_presence",
              "module_intent_boost", "orientation_boost"});
  read_int(obj, where, "alpha", &out->alpha);
  read_int(obj, where, "g_max", &out->g_max);
  if (obj.contains("verticals")) {
    const ordered_json& arr = obj.at("verticals");
    if (!arr.is_array()) bad(where, "'verticals' must be an array");
    out->verticals.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      std::string vw = where + ".verticals[" + std::to_string(i) + "]";
      const ordered_json& v = arr[i];
      check_keys(v, vw, {"vertical_id", "name", "raw_dim"});
      corpus::VerticalSchema vs;
      read_int(v, vw, "vertical_id", &vs.vertical_id);
      vs.name = read_string(v, vw, "name", "");
      read_int(v, vw, "raw_dim", &vs.raw_dim);
      if (vs.name.empty()) bad(vw, "'name' is required");
      out->verticals.push_back(std::move(vs));
    }
  }
  read_int(obj, where, "queries", &out->queries);
  read_int(obj, where, "test_queries", &out->test_queries);
  read_int(obj, where, "blue_links_per_query", &out->blue_links_per_query);
  read_int(obj, where, "docs_per_module", &out->docs_per_module);
  read_double(obj, where, "intent_signal", &out->intent_signal);
  read_double(obj, where, "query_signal", &out->query_signal);
  read_double(obj, where, "relevant_fraction", &out->relevant_fraction);
  read_double(obj, where, "embedding_noise", &out->embedding_noise);
  read_double(obj, where, "feature_noise", &out->feature_noise);
  read_double(obj, where, "topic_purity", &out->topic_purity);
  read_double(obj, where, "module_presence", &out->module_presence);
  read_double(obj, where, "module_intent_boost", &out->module_intent_boost);
  read_double(obj, where, "orientation_boost", &out->orientation_boost);
}

void parse_click(const ordered_json& obj, const std::string& where,
                 corpus::ClickModelConfig* out) {
  check_keys(obj, where, {"examine_decay", "click_threshold", "noise_flip"});
  read_double(obj, where, "examine_decay", &out->examine_decay);
  read_int(obj, where, "click_threshold", &out->click_threshold);
  read_double(obj, where, "noise_flip", &out->noise_flip);
}

void parse_train(const ordered_json& obj, const std::string& where, train::TrainConfig* out) {
  check_keys(obj, where,
             {"reward", "supervision", "weak_rank_discount", "episodes_per_batch", "max_updates",
              "learning_rate", "step_rule", "baseline", "ssl_enabled", "inverse_weight",
              "forward_weight", "gru_mode", "context_mode", "context_length", "target_length",
              "alpha", "seed", "threads", "folds", "fold_index"});
  if (obj.contains("reward")) {
    std::string text = read_string(obj, where, "reward", "");
    try {
      out->reward = metrics::parse_metric(text, out->reward.g_max);
    } catch (const Error& e) {
      bad(where, e.what());
    }
  }
  if (obj.contains("supervision")) {
    out->supervision = train::parse_supervision(read_string(obj, where, "supervision", ""));
  }
  read_bool(obj, where, "weak_rank_discount", &out->weak_rank_discount);
  read_int(obj, where, "episodes_per_batch", &out->episodes_per_batch);
  read_int(obj, where, "max_updates", &out->max_updates);
  read_double(obj, where, "learning_rate", &out->learning_rate);
  if (obj.contains("step_rule")) {
    out->step_rule = train::parse_step_rule(read_string(obj, where, "step_rule", ""));
  }
  if (obj.contains("baseline")) {
    out->baseline = train::parse_baseline(read_string(obj, where, "baseline", ""));
  }
  read_bool(obj, where, "ssl_enabled", &out->ssl_enabled);
  read_double(obj, where, "inverse_weight", &out->inverse_weight);
  read_double(obj, where, "forward_weight", &out->forward_weight);
  if (obj.contains("gru_mode")) {
    std::string text = read_string(obj, where, "gru_mode", "");
    if (text == "uni") {
      out->gru_mode = policy::GruMode::kUni;
    } else if (text == "dual") {
      out->gru_mode = policy::GruMode::kDual;
    } else {
      bad(where, "'gru_mode' must be uni or dual");
    }
  }
  if (obj.contains("context_mode")) {
    out->context_mode = env::parse_context_mode(read_string(obj, where, "context_mode", ""));
  }
  read_int(obj, where, "context_length", &out->context_length);
  read_int(obj, where, "target_length", &out->target_length);
  read_int(obj, where, "alpha", &out->alpha);
  read_int(obj, where, "seed", &out->seed);
  read_int(obj, where, "threads", &out->threads);
  read_int(obj, where, "folds", &out->folds);
  read_int(obj, where, "fold_index", &out->fold_index);
}

}  // namespace

FileConfig defaults() { return FileConfig{}; }

FileConfig parse(const std::string& text, const std::string& where) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    bad(where, std::string("not valid JSON: ") + e.what());
  }
  check_keys(root, where, {"synth", "train", "click_model"});
  FileConfig out;
  if (root.contains("synth")) parse_synth(root.at("synth"), where + ".synth", &out.synth);
  if (root.contains("train")) parse_train(root.at("train"), where + ".train", &out.train);
  if (root.contains("click_model")) {
    parse_click(root.at("click_model"), where + ".click_model", &out.click_model);
  }
  out.train.click_model = out.click_model;
  return out;
}

FileConfig load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string dump(const FileConfig& config) {
  ordered_json synth;
  synth["alpha"] = config.synth.alpha;
  synth["g_max"] = config.synth.g_max;
  ordered_json verts = ordered_json::array();
  for (const corpus::VerticalSchema& v : config.synth.verticals) {
    verts.push_back(
        {{"vertical_id", v.vertical_id}, {"name", v.name}, {"raw_dim", v.raw_dim}});
  }
  synth["verticals"] = std::move(verts);
  synth["queries"] = config.synth.queries;
  synth["test_queries"] = config.synth.test_queries;
  synth["blue_links_per_query"] = config.synth.blue_links_per_query;
  synth["docs_per_module"] = config.synth.docs_per_module;
  synth["intent_signal"] = config.synth.intent_signal;
  synth["query_signal"] = config.synth.query_signal;
  synth["relevant_fraction"] = config.synth.relevant_fraction;
  synth["embedding_noise"] = config.synth.embedding_noise;
  synth["feature_noise"] = config.synth.feature_noise;
  synth["topic_purity"] = config.synth.topic_purity;
  synth["module_presence"] = config.synth.module_presence;
  synth["module_intent_boost"] = config.synth.module_intent_boost;
  synth["orientation_boost"] = config.synth.orientation_boost;

  ordered_json tr;
  tr["reward"] = metrics::metric_name(config.train.reward);
  tr["supervision"] = train::supervision_name(config.train.supervision);
  tr["weak_rank_discount"] = config.train.weak_rank_discount;
  tr["episodes_per_batch"] = config.train.episodes_per_batch;
  tr["max_updates"] = config.train.max_updates;
  tr["learning_rate"] = config.train.learning_rate;
  tr["step_rule"] = train::step_rule_name(config.train.step_rule);
  tr["baseline"] = train::baseline_name(config.train.baseline);
  tr["ssl_enabled"] = config.train.ssl_enabled;
  tr["inverse_weight"] = config.train.inverse_weight;
  tr["forward_weight"] = config.train.forward_weight;
  tr["gru_mode"] = config.train.gru_mode == policy::GruMode::kUni ? "uni" : "dual";
  tr["context_mode"] = env::context_mode_name(config.train.context_mode);
  tr["context_length"] = config.train.context_length;
  tr["target_length"] = config.train.target_length;
  tr["alpha"] = config.train.alpha;
  tr["seed"] = config.train.seed;
  tr["threads"] = config.train.threads;
  tr["folds"] = config.train.folds;
  tr["fold_index"] = config.train.fold_index;

  ordered_json click;
  click["examine_decay"] = config.click_model.examine_decay;
  click["click_threshold"] = config.click_model.click_threshold;
  click["noise_flip"] = config.click_model.noise_flip;

  ordered_json root;
  root["synth"] = std::move(synth);
  root["train"] = std::move(tr);
  root["click_model"] = std::move(click);
  return root.dump(2) + "\n";
}

}  // namespace aggrank::config
