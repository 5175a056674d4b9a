#pragma once

#include <string>
#include <vector>

namespace aggrank::metrics {

enum class MetricKind { kNdcg, kAsDcg, kAsErr };

struct MetricSpec {
  MetricKind kind = MetricKind::kAsDcg;
  int cutoff = 10;
  int g_max = 4;
};

MetricSpec parse_metric(const std::string& text, int g_max);  // e.g. "ndcg@10"
std::string metric_name(const MetricSpec& spec);

// One placed item as the metrics see it: an integer gain grade, the
// orientation weight of its vertical, and the vertical id itself.
struct RankedItemGain {
  int gain = 0;           // 0..g_max
  double orientation = 1.0;  // 1 for blue links
  int vertical_id = 0;       // 0 for blue links
};

// Aggregated gain of a module: floor of the mean of its doc grades.
int module_gain(const std::vector<int>& doc_grades);

// DCG with gain (2^g - 1) and discount log2(t+1), t = 1-based rank.
double dcg(const std::vector<int>& gains, int cutoff);

// Normalized against the best permutation of `pool`; 0 when the ideal is 0.
// pool must contain every gain of the evaluated ranking (it is the full
// candidate gain multiset).
double ndcg(const std::vector<int>& gains, const std::vector<int>& pool, int cutoff);

// Cascade metric: R_t = (2^g - 1) / 2^g_max.
double err(const std::vector<int>& gains, int g_max, int cutoff);

// Orientation-weighted variants over placed items; kind selects between
// the DCG-style sum and the ERR-style cascade with scaled satisfaction.
double as_metric(const std::vector<RankedItemGain>& items, const MetricSpec& spec);

// Metric value of a ranking prefix under any spec; `pool` is the gain
// multiset of all candidates and is needed for normalization only.
double serp_value(const std::vector<RankedItemGain>& items, const std::vector<int>& pool,
                  const MetricSpec& spec);

// Telescoping shaping: value(after) - value(before).
double step_reward(const MetricSpec& spec, const std::vector<int>& pool,
                   const std::vector<RankedItemGain>& before,
                   const std::vector<RankedItemGain>& after);

}  // namespace aggrank::metrics
