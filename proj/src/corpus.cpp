#include "aggrank/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aggrank/error.hpp"

namespace aggrank::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

const VerticalSchema& DatasetSchema::vertical(int vertical_id) const {
  if (vertical_id < 1 || vertical_id > vertical_count()) {
    throw DataError("unknown vertical id: " + std::to_string(vertical_id));
  }
  return verticals[static_cast<std::size_t>(vertical_id - 1)];
}

void validate_schema(const DatasetSchema& schema) {
  if (schema.alpha < 1) throw SchemaError("schema: alpha must be positive");
  if (schema.g_max < 1) throw SchemaError("schema: g_max must be positive");
  if (schema.verticals.empty()) throw SchemaError("schema: at least one vertical required");
  for (std::size_t i = 0; i < schema.verticals.size(); ++i) {
    const VerticalSchema& v = schema.verticals[i];
    if (v.vertical_id != static_cast<int>(i) + 1) {
      throw SchemaError("schema: vertical ids must be contiguous starting at 1, found " +
                        std::to_string(v.vertical_id) + " at position " + std::to_string(i));
    }
    if (v.raw_dim < 1) {
      throw SchemaError("schema: vertical " + std::to_string(v.vertical_id) +
                        " has non-positive raw_dim");
    }
    if (v.name.empty()) {
      throw SchemaError("schema: vertical " + std::to_string(v.vertical_id) + " has empty name");
    }
  }
}

void validate_query(const QueryRecord& query, const DatasetSchema& schema,
                    const std::string& where) {
  auto fail = [&](const std::string& msg) { throw SchemaError(where + ": " + msg); };
  if (query.query_id.empty()) fail("query_id is empty");
  if (static_cast<int>(query.embedding.size()) != schema.alpha) {
    fail("field 'embedding' has length " + std::to_string(query.embedding.size()) +
         ", expected alpha = " + std::to_string(schema.alpha));
  }
  for (const BlueLink& b : query.blue_links) {
    if (b.doc_id.empty()) fail("blue link with empty doc_id");
    if (static_cast<int>(b.embedding.size()) != schema.alpha) {
      fail("blue link '" + b.doc_id + "' field 'embedding' has length " +
           std::to_string(b.embedding.size()) + ", expected alpha = " +
           std::to_string(schema.alpha));
    }
    if (b.relevance < 0 || b.relevance > schema.g_max) {
      fail("blue link '" + b.doc_id + "' relevance " + std::to_string(b.relevance) +
           " outside 0.." + std::to_string(schema.g_max));
    }
  }
  std::vector<bool> seen(static_cast<std::size_t>(schema.vertical_count()) + 1, false);
  for (const ModuleRecord& m : query.modules) {
    if (m.module_id.empty()) fail("module with empty module_id");
    if (m.vertical_id < 1 || m.vertical_id > schema.vertical_count()) {
      fail("module '" + m.module_id + "' has unknown vertical_id " +
           std::to_string(m.vertical_id));
    }
    if (seen[static_cast<std::size_t>(m.vertical_id)]) {
      fail("more than one module for vertical " + std::to_string(m.vertical_id));
    }
    seen[static_cast<std::size_t>(m.vertical_id)] = true;
    int want = schema.vertical(m.vertical_id).raw_dim;
    if (static_cast<int>(m.raw_features.size()) != want) {
      fail("module '" + m.module_id + "' field 'raw_features' has length " +
           std::to_string(m.raw_features.size()) + ", expected raw_dim = " +
           std::to_string(want));
    }
    if (m.doc_grades.empty()) fail("module '" + m.module_id + "' has no doc_grades");
    for (int g : m.doc_grades) {
      if (g < 0 || g > schema.g_max) {
        fail("module '" + m.module_id + "' doc grade " + std::to_string(g) + " outside 0.." +
             std::to_string(schema.g_max));
      }
    }
  }
  std::size_t want_len = static_cast<std::size_t>(schema.vertical_count()) + 1;
  if (query.orientation.size() != want_len) {
    fail("field 'orientation' has length " + std::to_string(query.orientation.size()) +
         ", expected J+1 = " + std::to_string(want_len));
  }
  if (query.orientation[0] != 1.0) fail("orientation[0] must be exactly 1");
  for (double w : query.orientation) {
    if (!(w >= 0.0 && w <= 1.0)) fail("orientation weights must lie in [0,1]");
  }
}

std::string schema_to_json(const DatasetSchema& schema) {
  ordered_json root;
  root["alpha"] = schema.alpha;
  root["g_max"] = schema.g_max;
  ordered_json verts = ordered_json::array();
  for (const VerticalSchema& v : schema.verticals) {
    verts.push_back({{"vertical_id", v.vertical_id}, {"name", v.name}, {"raw_dim", v.raw_dim}});
  }
  root["verticals"] = std::move(verts);
  return root.dump();
}

DatasetSchema schema_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema is not valid JSON: ") + e.what());
  }
  DatasetSchema schema;
  try {
    schema.alpha = root.at("alpha").get<int>();
    schema.g_max = root.at("g_max").get<int>();
    for (const auto& v : root.at("verticals")) {
      VerticalSchema vs;
      vs.vertical_id = v.at("vertical_id").get<int>();
      vs.name = v.at("name").get<std::string>();
      vs.raw_dim = v.at("raw_dim").get<int>();
      schema.verticals.push_back(std::move(vs));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema field error: ") + e.what());
  }
  validate_schema(schema);
  return schema;
}

DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open schema: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return schema_from_json(buf.str());
}

void save_schema(const std::string& path, const DatasetSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << schema_to_json(schema) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

namespace {

ordered_json query_to_json(const QueryRecord& q) {
  ordered_json root;
  root["query_id"] = q.query_id;
  root["embedding"] = q.embedding;
  ordered_json links = ordered_json::array();
  for (const BlueLink& b : q.blue_links) {
    links.push_back(
        {{"doc_id", b.doc_id}, {"embedding", b.embedding}, {"relevance", b.relevance}});
  }
  root["blue_links"] = std::move(links);
  ordered_json mods = ordered_json::array();
  for (const ModuleRecord& m : q.modules) {
    mods.push_back({{"module_id", m.module_id},
                    {"vertical_id", m.vertical_id},
                    {"raw_features", m.raw_features},
                    {"doc_grades", m.doc_grades}});
  }
  root["modules"] = std::move(mods);
  root["orientation"] = q.orientation;
  return root;
}

QueryRecord query_from_json(const json& root) {
  QueryRecord q;
  q.query_id = root.at("query_id").get<std::string>();
  q.embedding = root.at("embedding").get<std::vector<double>>();
  for (const auto& b : root.at("blue_links")) {
    BlueLink link;
    link.doc_id = b.at("doc_id").get<std::string>();
    link.embedding = b.at("embedding").get<std::vector<double>>();
    link.relevance = b.at("relevance").get<int>();
    q.blue_links.push_back(std::move(link));
  }
  for (const auto& m : root.at("modules")) {
    ModuleRecord mod;
    mod.module_id = m.at("module_id").get<std::string>();
    mod.vertical_id = m.at("vertical_id").get<int>();
    mod.raw_features = m.at("raw_features").get<std::vector<double>>();
    mod.doc_grades = m.at("doc_grades").get<std::vector<int>>();
    q.modules.push_back(std::move(mod));
  }
  q.orientation = root.at("orientation").get<std::vector<double>>();
  return q;
}

}  // namespace

std::vector<QueryRecord> load_dataset(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::vector<QueryRecord> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(line_no);
    json root;
    try {
      root = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": malformed JSON record: " + e.what());
    }
    QueryRecord q;
    try {
      q = query_from_json(root);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": field error: " + e.what());
    }
    validate_query(q, schema, where);
    queries.push_back(std::move(q));
  }
  return queries;
}

void save_dataset(const std::string& path, const std::vector<QueryRecord>& queries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const QueryRecord& q : queries) out << query_to_json(q).dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ClickLog> load_click_logs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open click log: " + path);
  std::vector<ClickLog> logs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(line_no);
    try {
      json root = json::parse(line);
      ClickLog log;
      log.query_id = root.at("query_id").get<std::string>();
      log.impressions = root.at("impressions").get<std::vector<std::string>>();
      log.clicks = root.at("clicks").get<std::vector<std::uint8_t>>();
      if (log.clicks.size() != log.impressions.size()) {
        throw SchemaError(where + ": clicks and impressions have different lengths");
      }
      logs.push_back(std::move(log));
    } catch (const json::exception& e) {
      throw SchemaError(where + ": malformed click record: " + e.what());
    }
  }
  return logs;
}

void save_click_logs(const std::string& path, const std::vector<ClickLog>& logs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const ClickLog& log : logs) {
    ordered_json root;
    root["query_id"] = log.query_id;
    root["impressions"] = log.impressions;
    root["clicks"] = log.clicks;
    out << root.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------

void validate_synth_config(const SynthConfig& config) {
  if (config.alpha < 2) throw ConfigError("synth: alpha must be at least 2");
  if (config.g_max < 1) throw ConfigError("synth: g_max must be positive");
  if (config.queries < 0 || config.test_queries < 0) {
    throw ConfigError("synth: query counts must be nonnegative");
  }
  if (config.blue_links_per_query < 1) throw ConfigError("synth: need at least one blue link");
  if (config.docs_per_module < 1) throw ConfigError("synth: docs_per_module must be positive");
  if (!(config.intent_signal >= 0.0 && config.intent_signal <= 1.0)) {
    throw ConfigError("synth: intent_signal must lie in [0,1]");
  }
  if (!(config.query_signal >= 0.0 && config.query_signal <= 1.0)) {
    throw ConfigError("synth: query_signal must lie in [0,1]");
  }
  if (!(config.relevant_fraction >= 0.0 && config.relevant_fraction <= 1.0)) {
    throw ConfigError("synth: relevant_fraction must lie in [0,1]");
  }
  if (!(config.topic_purity >= 0.0 && config.topic_purity <= 1.0)) {
    throw ConfigError("synth: topic_purity must lie in [0,1]");
  }
  if (!(config.module_presence >= 0.0 && config.module_presence <= 1.0)) {
    throw ConfigError("synth: module_presence must lie in [0,1]");
  }
  if (config.embedding_noise < 0.0 || config.feature_noise < 0.0) {
    throw ConfigError("synth: noise levels must be nonnegative");
  }
  DatasetSchema schema{config.alpha, config.g_max, config.verticals};
  try {
    validate_schema(schema);
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  for (const VerticalSchema& v : config.verticals) {
    if (v.raw_dim <= 2 * config.docs_per_module) {
      throw ConfigError("synth: vertical " + std::to_string(v.vertical_id) +
                        " raw_dim must exceed 2*docs_per_module = " +
                        std::to_string(2 * config.docs_per_module));
    }
  }
}

namespace {

std::vector<double> random_unit(int dim, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  double inv = 1.0 / std::max(std::sqrt(norm2), 1e-12);
  for (double& x : v) x *= inv;
  return v;
}

std::string pad_number(int n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

QueryRecord make_query(const SynthConfig& cfg, int index,
                       const std::vector<std::vector<double>>& dirs,
                       const std::vector<double>& mu_rel, Rng& rng) {
  int J = static_cast<int>(cfg.verticals.size());
  int z = 1 + static_cast<int>(rng.uniform_int(0, J - 1));
  double inv_sqrt_alpha = 1.0 / std::sqrt(static_cast<double>(cfg.alpha));

  QueryRecord q;
  q.query_id = "q" + pad_number(index, 5);

  q.embedding.resize(static_cast<std::size_t>(cfg.alpha));
  double norm2 = 0.0;
  for (std::size_t i = 0; i < q.embedding.size(); ++i) {
    q.embedding[i] = rng.normal(0.0, inv_sqrt_alpha) +
                     cfg.query_signal * dirs[static_cast<std::size_t>(z - 1)][i];
    norm2 += q.embedding[i] * q.embedding[i];
  }
  double inv = 1.0 / std::max(std::sqrt(norm2), 1e-12);
  for (double& x : q.embedding) x *= inv;

  for (int d = 0; d < cfg.blue_links_per_query; ++d) {
    BlueLink link;
    link.doc_id = q.query_id + "_d" + pad_number(d, 2);
    bool relevant = rng.bernoulli(cfg.relevant_fraction);
    link.relevance = relevant ? 2 + static_cast<int>(rng.uniform_int(0, cfg.g_max - 2 > 0
                                                                            ? cfg.g_max - 2
                                                                            : 0))
                              : static_cast<int>(rng.uniform_int(0, 1));
    if (link.relevance > cfg.g_max) link.relevance = cfg.g_max;
    int topic = 0;
    if (relevant) {
      topic = rng.bernoulli(cfg.topic_purity) ? z : 1 + static_cast<int>(rng.uniform_int(0, J - 1));
    } else if (rng.bernoulli(0.3)) {
      topic = 1 + static_cast<int>(rng.uniform_int(0, J - 1));
    }
    double strength = static_cast<double>(link.relevance) / cfg.g_max;
    link.embedding.resize(static_cast<std::size_t>(cfg.alpha));
    for (std::size_t i = 0; i < link.embedding.size(); ++i) {
      double v = strength * mu_rel[i];
      if (topic > 0) {
        v += cfg.intent_signal * strength * dirs[static_cast<std::size_t>(topic - 1)][i];
      }
      v += rng.normal(0.0, cfg.embedding_noise * inv_sqrt_alpha);
      link.embedding[i] = v;
    }
    q.blue_links.push_back(std::move(link));
  }

  for (const VerticalSchema& vert : cfg.verticals) {
    if (!rng.bernoulli(cfg.module_presence)) continue;
    ModuleRecord mod;
    mod.module_id = q.query_id + "_m" + std::to_string(vert.vertical_id);
    mod.vertical_id = vert.vertical_id;
    double base = rng.uniform(0.2, 1.6);
    double boost = (vert.vertical_id == z)
                       ? cfg.intent_signal * (cfg.module_intent_boost + rng.uniform(0.0, 0.8))
                       : 0.0;
    for (int j = 0; j < cfg.docs_per_module; ++j) {
      double raw = base + boost + rng.normal(0.0, 0.5);
      int g = static_cast<int>(std::lround(raw));
      mod.doc_grades.push_back(std::clamp(g, 0, cfg.g_max));
    }
    mod.raw_features.resize(static_cast<std::size_t>(vert.raw_dim));
    for (int j = 0; j < cfg.docs_per_module; ++j) {
      double quality = static_cast<double>(mod.doc_grades[static_cast<std::size_t>(j)]) /
                       cfg.g_max;
      mod.raw_features[static_cast<std::size_t>(2 * j)] =
          quality + rng.normal(0.0, cfg.feature_noise);
      mod.raw_features[static_cast<std::size_t>(2 * j + 1)] = rng.normal(0.0, 1.0);
    }
    for (int d = 2 * cfg.docs_per_module; d < vert.raw_dim; ++d) {
      mod.raw_features[static_cast<std::size_t>(d)] =
          rng.normal(0.3 * vert.vertical_id, 0.3);
    }
    q.modules.push_back(std::move(mod));
  }

  q.orientation.assign(static_cast<std::size_t>(J) + 1, 0.0);
  q.orientation[0] = 1.0;
  for (int j = 1; j <= J; ++j) {
    double w = 0.18 + rng.uniform(0.0, 0.12);
    if (j == z) w += cfg.intent_signal * cfg.orientation_boost;
    w += rng.normal(0.0, 0.03);
    q.orientation[static_cast<std::size_t>(j)] = std::clamp(w, 0.0, 1.0);
  }
  return q;
}

}  // namespace

SynthOutput generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
  validate_synth_config(config);
  Rng rng(derive_seed(seed, 0x5eedc0de));

  // Latent world shared by every query of this corpus.
  std::vector<std::vector<double>> dirs;
  dirs.reserve(config.verticals.size());
  for (std::size_t j = 0; j < config.verticals.size(); ++j) {
    dirs.push_back(random_unit(config.alpha, rng));
  }
  std::vector<double> mu_rel = random_unit(config.alpha, rng);

  SynthOutput out;
  out.schema = DatasetSchema{config.alpha, config.g_max, config.verticals};
  for (int i = 0; i < config.queries; ++i) {
    out.train.push_back(make_query(config, i, dirs, mu_rel, rng));
  }
  for (int i = 0; i < config.test_queries; ++i) {
    out.test.push_back(make_query(config, config.queries + i, dirs, mu_rel, rng));
  }
  for (const QueryRecord& q : out.train) validate_query(q, out.schema, "generated " + q.query_id);
  for (const QueryRecord& q : out.test) validate_query(q, out.schema, "generated " + q.query_id);
  return out;
}

// ---------------------------------------------------------------------------

void validate_click_config(const ClickModelConfig& config) {
  if (!(config.examine_decay > 0.0 && config.examine_decay <= 1.0)) {
    throw ConfigError("click model: examine_decay must lie in (0,1]");
  }
  if (!(config.noise_flip >= 0.0 && config.noise_flip <= 1.0)) {
    throw ConfigError("click model: noise_flip must lie in [0,1]");
  }
  if (config.click_threshold < 0) {
    throw ConfigError("click model: click_threshold must be nonnegative");
  }
}

std::vector<std::uint8_t> simulate_clicks(const std::vector<int>& grades_by_rank,
                                          const ClickModelConfig& config, Rng& rng) {
  validate_click_config(config);
  std::vector<std::uint8_t> clicks(grades_by_rank.size(), 0);
  double p_examine = 1.0;
  for (std::size_t t = 0; t < grades_by_rank.size(); ++t) {
    bool examined = rng.bernoulli(p_examine);
    if (examined) {
      bool relevant = grades_by_rank[t] >= config.click_threshold;
      if (rng.bernoulli(config.noise_flip)) relevant = !relevant;
      clicks[t] = relevant ? 1 : 0;
    }
    p_examine *= config.examine_decay;
  }
  return clicks;
}

}  // namespace aggrank::corpus
