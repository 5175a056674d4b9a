#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aggrank/rng.hpp"

namespace aggrank::corpus {

struct VerticalSchema {
  int vertical_id = 0;  // >= 1; 0 is reserved for blue links
  std::string name;
  int raw_dim = 0;
};

struct DatasetSchema {
  int alpha = 0;
  int g_max = 4;
  std::vector<VerticalSchema> verticals;  // ids must be 1..J in order

  int vertical_count() const { return static_cast<int>(verticals.size()); }
  const VerticalSchema& vertical(int vertical_id) const;
};

struct BlueLink {
  std::string doc_id;
  std::vector<double> embedding;  // length alpha
  int relevance = 0;              // 0..g_max
};

struct ModuleRecord {
  std::string module_id;
  int vertical_id = 0;
  std::vector<double> raw_features;  // length raw_dim of its vertical
  std::vector<int> doc_grades;       // nonempty, each 0..g_max
};

struct QueryRecord {
  std::string query_id;
  std::vector<double> embedding;  // length alpha
  std::vector<BlueLink> blue_links;
  std::vector<ModuleRecord> modules;      // at most one per vertical
  std::vector<double> orientation;        // length J+1, orientation[0] == 1
};

struct ClickLog {
  std::string query_id;
  std::vector<std::string> impressions;  // item ids in ranked order
  std::vector<std::uint8_t> clicks;      // aligned with impressions
};

void validate_schema(const DatasetSchema& schema);
// Checks every dimensional and range invariant of a record against the
// schema; `where` prefixes error messages (e.g. a file:line location).
void validate_query(const QueryRecord& query, const DatasetSchema& schema,
                    const std::string& where);

std::string schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const std::string& text);
DatasetSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const DatasetSchema& schema);

// JSON-lines, one query per line. Loading validates against the schema and
// reports the offending line and field on failure.
std::vector<QueryRecord> load_dataset(const std::string& path, const DatasetSchema& schema);
void save_dataset(const std::string& path, const std::vector<QueryRecord>& queries);

std::vector<ClickLog> load_click_logs(const std::string& path);
void save_click_logs(const std::string& path, const std::vector<ClickLog>& logs);

// ---------------------------------------------------------------------------
// Synthetic corpus generation.
//
// Each query draws a latent intended vertical z. Blue links mix a global
// relevance direction with a per-vertical topic direction whose weight is
// intent_signal; module doc grades are boosted for vertical z by the same
// knob; orientation weights favor z. intent_signal = 0 severs every
// correlation between observable context and z.
struct SynthConfig {
  int alpha = 32;
  int g_max = 4;
  std::vector<VerticalSchema> verticals = {
      {1, "news", 8}, {2, "images", 9}, {3, "video", 10}, {4, "shopping", 11}};
  int queries = 100;
  int test_queries = 0;
  int blue_links_per_query = 15;
  int docs_per_module = 3;
  double intent_signal = 1.0;     // lambda in [0,1]
  double query_signal = 0.2;      // how much of z leaks into the query embedding
  double relevant_fraction = 0.4;
  double embedding_noise = 0.3;
  double feature_noise = 0.35;    // grade blur in module raw features
  double topic_purity = 0.85;     // P(relevant doc is on the intended topic)
  double module_presence = 1.0;   // P(a vertical contributes a module)
  double module_intent_boost = 2.4;
  double orientation_boost = 0.65;
};

void validate_synth_config(const SynthConfig& config);

struct SynthOutput {
  DatasetSchema schema;
  std::vector<QueryRecord> train;
  std::vector<QueryRecord> test;
};

// Deterministic: same (config, seed) yields byte-identical corpora.
SynthOutput generate_synthetic(const SynthConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Position-based click model.
struct ClickModelConfig {
  double examine_decay = 0.7;  // eta in (0, 1]; P(examine rank t) = eta^(t-1)
  int click_threshold = 2;     // perceived relevant iff grade >= threshold
  double noise_flip = 0.1;     // epsilon: probability the perception flips
};

void validate_click_config(const ClickModelConfig& config);

// One simulated browse of a ranked list; grades are aligned with ranks.
std::vector<std::uint8_t> simulate_clicks(const std::vector<int>& grades_by_rank,
                                          const ClickModelConfig& config, Rng& rng);

}  // namespace aggrank::corpus
