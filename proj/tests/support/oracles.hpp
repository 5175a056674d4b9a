#pragma once

// Reference implementations and harness plumbing shared by the test
// binaries. Everything here is written independently of the library code
// under test: metrics by direct formula expansion, gradients by central
// finite differences, optimal rankings by exhaustive permutation search.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "aggrank/params.hpp"

namespace testsup {

// ---------------------------------------------------------------------------
// Brute-force ranking metrics.

struct GainItem {
  int gain = 0;
  double weight = 1.0;  // orientation; 1 for blue links
};

inline double bf_dcg(const std::vector<int>& gains, int cutoff) {
  double total = 0.0;
  for (std::size_t t = 0; t < gains.size() && t < static_cast<std::size_t>(cutoff); ++t) {
    double numer = std::pow(2.0, gains[t]) - 1.0;
    double denom = std::log2(static_cast<double>(t) + 2.0);
    total += numer / denom;
  }
  return total;
}

inline double bf_ideal_dcg(std::vector<int> pool, int cutoff) {
  std::sort(pool.begin(), pool.end(), std::greater<int>());
  return bf_dcg(pool, cutoff);
}

inline double bf_ndcg(const std::vector<int>& gains, const std::vector<int>& pool, int cutoff) {
  double ideal = bf_ideal_dcg(pool, cutoff);
  if (ideal == 0.0) return 0.0;
  return bf_dcg(gains, cutoff) / ideal;
}

inline double bf_err(const std::vector<int>& gains, int g_max, int cutoff) {
  double result = 0.0;
  double not_stopped = 1.0;
  for (std::size_t t = 0; t < gains.size() && t < static_cast<std::size_t>(cutoff); ++t) {
    double r = (std::pow(2.0, gains[t]) - 1.0) / std::pow(2.0, g_max);
    result += not_stopped * r / (static_cast<double>(t) + 1.0);
    not_stopped *= 1.0 - r;
  }
  return result;
}

inline double bf_as_dcg(const std::vector<GainItem>& items, int cutoff) {
  double total = 0.0;
  for (std::size_t t = 0; t < items.size() && t < static_cast<std::size_t>(cutoff); ++t) {
    double numer = items[t].weight * (std::pow(2.0, items[t].gain) - 1.0);
    total += numer / std::log2(static_cast<double>(t) + 2.0);
  }
  return total;
}

inline double bf_as_err(const std::vector<GainItem>& items, int g_max, int cutoff) {
  double result = 0.0;
  double not_stopped = 1.0;
  for (std::size_t t = 0; t < items.size() && t < static_cast<std::size_t>(cutoff); ++t) {
    double r = items[t].weight * (std::pow(2.0, items[t].gain) - 1.0) / std::pow(2.0, g_max);
    result += not_stopped * r / (static_cast<double>(t) + 1.0);
    not_stopped *= 1.0 - r;
  }
  return result;
}

// Best achievable value over every permutation of the items, truncated at
// cutoff. Factorial search: callers keep items.size() <= 8.
template <typename Score>
double best_over_permutations(std::vector<GainItem> items, const Score& score) {
  std::sort(items.begin(), items.end(), [](const GainItem& a, const GainItem& b) {
    if (a.gain != b.gain) return a.gain < b.gain;
    return a.weight < b.weight;
  });
  double best = -1.0;
  do {
    best = std::max(best, score(items));
  } while (std::next_permutation(items.begin(), items.end(),
                                 [](const GainItem& a, const GainItem& b) {
                                   if (a.gain != b.gain) return a.gain < b.gain;
                                   return a.weight < b.weight;
                                 }));
  return best;
}

// ---------------------------------------------------------------------------
// Central-difference gradient validation.

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
};

// Compares analytic parameter gradients against (f(+h) - f(-h)) / 2h for
// every scalar in the store. eval() must recompute the objective from the
// store's current values; the store is restored afterwards.
template <typename F>
FdReport fd_check(aggrank::nn::ParamStore& store, const aggrank::nn::Gradients& analytic,
                  F&& eval, double h = 1e-4) {
  FdReport report;
  for (int p = 0; p < store.count(); ++p) {
    std::vector<double>& raw = store.at(p).raw();
    const std::vector<double>& g = analytic.at(p).raw();
    for (std::size_t k = 0; k < raw.size(); ++k) {
      double keep = raw[k];
      raw[k] = keep + h;
      double up = eval();
      raw[k] = keep - h;
      double down = eval();
      raw[k] = keep;
      double fd = (up - down) / (2.0 * h);
      double denom = std::max({1e-6, std::fabs(g[k]), std::fabs(fd)});
      double rel = std::fabs(g[k] - fd) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = store.name(p);
        report.worst_index = k;
        report.worst_analytic = g[k];
        report.worst_fd = fd;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Simple statistics.

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double standard_error(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  return sample_sd(xs) / std::sqrt(static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Process and filesystem helpers for command line tests.

class TempDir {
 public:
  TempDir() {
    std::string templ = (std::filesystem::temp_directory_path() / "aggrank_test_XXXXXX").string();
    std::vector<char> buf(templ.begin(), templ.end());
    buf.push_back('\0');
    if (mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

#ifndef AGGRANK_BIN
#define AGGRANK_BIN "aggrank"
#endif

// Runs the command line binary with the given argument string; stdout and
// stderr are captured through temp files.
inline CliResult run_cli(const std::string& args) {
  TempDir io;
  std::string cmd = std::string(AGGRANK_BIN) + " " + args + " >" + io.file("out") + " 2>" +
                    io.file("err");
  int rc = std::system(cmd.c_str());
  CliResult result;
  if (rc == -1) {
    result.exit_code = -1;
  } else {
    result.exit_code = WEXITSTATUS(rc);
  }
  result.out = read_file(io.file("out"));
  result.err = read_file(io.file("err"));
  return result;
}

// Strips a named column from a CSV text; used to compare reports that
// carry a wall-clock column.
inline std::string drop_csv_column(const std::string& text, const std::string& column) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  std::ptrdiff_t drop = -1;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == column) drop = static_cast<std::ptrdiff_t>(i);
      }
      first = false;
    }
    bool wrote = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<std::ptrdiff_t>(i) == drop) continue;
      if (wrote) out << ',';
      out << cells[i];
      wrote = true;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace testsup
