#include "aggrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "aggrank/error.hpp"

namespace aggrank::metrics {

MetricSpec parse_metric(const std::string& text, int g_max) {
  auto at = text.find('@');
  std::string name = text.substr(0, at);
  MetricSpec spec;
  spec.g_max = g_max;
  if (name == "ndcg") {
    spec.kind = MetricKind::kNdcg;
  } else if (name == "as_dcg") {
    spec.kind = MetricKind::kAsDcg;
  } else if (name == "as_err") {
    spec.kind = MetricKind::kAsErr;
  } else {
    throw UsageError("unknown metric name: '" + text +
                     "' (expected ndcg, as_dcg, or as_err, optionally with @cutoff)");
  }
  if (at != std::string::npos) {
    std::string tail = text.substr(at + 1);
    try {
      std::size_t used = 0;
      spec.cutoff = std::stoi(tail, &used);
      if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
      throw UsageError("bad metric cutoff in '" + text + "'");
    }
  }
  if (spec.cutoff < 1) throw UsageError("metric cutoff must be positive: " + text);
  return spec;
}

std::string metric_name(const MetricSpec& spec) {
  std::string name;
  switch (spec.kind) {
    case MetricKind::kNdcg: name = "ndcg"; break;
    case MetricKind::kAsDcg: name = "as_dcg"; break;
    case MetricKind::kAsErr: name = "as_err"; break;
  }
  return name + "@" + std::to_string(spec.cutoff);
}

int module_gain(const std::vector<int>& doc_grades) {
  if (doc_grades.empty()) throw ArgumentError("module_gain: no doc grades");
  double sum = 0.0;
  for (int g : doc_grades) sum += g;
  return static_cast<int>(std::floor(sum / static_cast<double>(doc_grades.size())));
}

namespace {

double gain_value(int g) { return std::exp2(static_cast<double>(g)) - 1.0; }

double discount(std::size_t rank1based) {
  return std::log2(static_cast<double>(rank1based) + 1.0);
}

void check_cutoff(int cutoff) {
  if (cutoff < 1) throw ArgumentError("metric cutoff must be positive");
}

}  // namespace

double dcg(const std::vector<int>& gains, int cutoff) {
  check_cutoff(cutoff);
  double acc = 0.0;
  std::size_t n = std::min(gains.size(), static_cast<std::size_t>(cutoff));
  for (std::size_t t = 0; t < n; ++t) acc += gain_value(gains[t]) / discount(t + 1);
  return acc;
}

double ndcg(const std::vector<int>& gains, const std::vector<int>& pool, int cutoff) {
  check_cutoff(cutoff);
  std::vector<int> ideal = pool;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  double best = dcg(ideal, cutoff);
  if (best == 0.0) return 0.0;
  return dcg(gains, cutoff) / best;
}

double err(const std::vector<int>& gains, int g_max, int cutoff) {
  check_cutoff(cutoff);
  if (g_max < 1) throw ArgumentError("err: g_max must be positive");
  double denom = std::exp2(static_cast<double>(g_max));
  double acc = 0.0;
  double not_yet = 1.0;  // probability no earlier item satisfied
  std::size_t n = std::min(gains.size(), static_cast<std::size_t>(cutoff));
  for (std::size_t t = 0; t < n; ++t) {
    double r = gain_value(gains[t]) / denom;
    acc += not_yet * r / static_cast<double>(t + 1);
    not_yet *= 1.0 - r;
  }
  return acc;
}

double as_metric(const std::vector<RankedItemGain>& items, const MetricSpec& spec) {
  check_cutoff(spec.cutoff);
  std::size_t n = std::min(items.size(), static_cast<std::size_t>(spec.cutoff));
  if (spec.kind == MetricKind::kAsDcg) {
    double acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += items[t].orientation * gain_value(items[t].gain) / discount(t + 1);
    }
    return acc;
  }
  if (spec.kind == MetricKind::kAsErr) {
    double denom = std::exp2(static_cast<double>(spec.g_max));
    double acc = 0.0;
    double not_yet = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
      double r = items[t].orientation * gain_value(items[t].gain) / denom;
      acc += not_yet * r / static_cast<double>(t + 1);
      not_yet *= 1.0 - r;
    }
    return acc;
  }
  throw ArgumentError("as_metric: spec must be an orientation-weighted kind");
}

double serp_value(const std::vector<RankedItemGain>& items, const std::vector<int>& pool,
                  const MetricSpec& spec) {
  if (spec.kind == MetricKind::kNdcg) {
    std::vector<int> gains;
    gains.reserve(items.size());
    for (const RankedItemGain& it : items) gains.push_back(it.gain);
    return ndcg(gains, pool, spec.cutoff);
  }
  return as_metric(items, spec);
}

double step_reward(const MetricSpec& spec, const std::vector<int>& pool,
                   const std::vector<RankedItemGain>& before,
                   const std::vector<RankedItemGain>& after) {
  return serp_value(after, pool, spec) - serp_value(before, pool, spec);
}

}  // namespace aggrank::metrics
