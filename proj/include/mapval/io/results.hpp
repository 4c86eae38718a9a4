#pragma once

// Tidy results table of a simulation study and the aggregate tables built
// from it (per-cell metric means, heatmap matrices, global RR summaries).

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mapval/io/csv.hpp"
#include "mapval/simulation.hpp"
#include "mapval/summary.hpp"

namespace mapval::io {

inline const std::vector<std::string>& results_columns() {
  static const std::vector<std::string> cols{
      "scenario", "setting",     "direction",   "baseline_p", "rho",      "sigma2",   "model",    "replicate",
      "attempt",  "rule",        "threshold",   "epsilon",    "rr_median", "rr_lower", "rr_upper", "delta_mean",
      "cstar",    "n_truth",     "n_detected",  "tp",         "fp",        "fn",       "tn",       "sensitivity",
      "specificity", "fdr",      "mcc",         "max_rhat",   "min_ess"};
  return cols;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> m{"sensitivity", "specificity", "fdr", "mcc"};
  return m;
}

inline std::string results_csv(const std::vector<ResultRow>& rows, const std::vector<std::string>& comments) {
  CsvWriter w(results_columns(), comments);
  for (const auto& r : rows) {
    w.write_row({r.scenario,
                 r.setting,
                 r.direction,
                 format_number(r.baseline_p),
                 format_number(r.rho),
                 format_number(r.sigma2),
                 r.model,
                 std::to_string(r.replicate),
                 std::to_string(r.attempt),
                 r.rule,
                 r.threshold,
                 format_number(r.epsilon),
                 format_number(r.rr_median),
                 format_number(r.rr_lower),
                 format_number(r.rr_upper),
                 format_number(r.delta_mean),
                 format_number(r.cstar),
                 std::to_string(r.n_truth),
                 std::to_string(r.n_detected),
                 std::to_string(r.counts.tp),
                 std::to_string(r.counts.fp),
                 std::to_string(r.counts.fn),
                 std::to_string(r.counts.tn),
                 format_optional(r.metrics.sensitivity),
                 format_optional(r.metrics.specificity),
                 format_optional(r.metrics.fdr),
                 format_optional(r.metrics.mcc),
                 format_number(r.max_rhat),
                 format_number(r.min_ess)});
  }
  return w.str();
}

inline std::string cells_csv(const std::vector<CellReport>& cells, const std::vector<std::string>& comments) {
  CsvWriter w({"scenario", "setting", "baseline_p", "rho", "model", "successes", "attempts", "failures", "aborted",
               "message"},
              comments);
  for (const auto& c : cells)
    w.write_row({c.scenario, c.setting, format_number(c.baseline_p), format_number(c.rho), c.model,
                 std::to_string(c.successes), std::to_string(c.attempts), std::to_string(c.failures),
                 c.aborted ? "true" : "false", c.message});
  return w.str();
}

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws SchemaError listing missing and unexpected columns.
inline void check_results_schema(const CsvTable& t) {
  const auto& want = results_columns();
  std::vector<std::string> missing, extra;
  for (const auto& c : want)
    if (!t.has(c)) missing.push_back(c);
  for (const auto& c : t.header)
    if (std::find(want.begin(), want.end(), c) == want.end()) extra.push_back(c);
  if (missing.empty() && extra.empty()) return;
  std::string msg = "results schema mismatch:";
  for (const auto& c : missing) msg += "\n  - " + c + " (missing)";
  for (const auto& c : extra) msg += "\n  + " + c + " (unexpected)";
  throw SchemaError(msg);
}

/// Mean of the non-missing entries and how many there were.
struct MeanCount {
  double sum = 0.0;
  int n = 0;
  void add(const std::string& cell, const std::string& what) {
    if (cell.empty()) return;
    sum += parse_double(cell, what);
    ++n;
  }
  std::optional<double> mean() const { return n ? std::optional<double>(sum / n) : std::nullopt; }
};

struct MetricGroup {
  std::vector<std::string> key;  // scenario, setting, direction, baseline_p, rho, model, rule, threshold, epsilon
  int rows = 0;
  std::map<std::string, MeanCount> metrics;
};

inline const std::vector<std::string>& metric_group_columns() {
  static const std::vector<std::string> k{"scenario", "setting", "direction", "baseline_p", "rho",
                                          "model",    "rule",    "threshold", "epsilon"};
  return k;
}

/// Per-(scenario, setting, p, rho, model, rule, threshold, epsilon) means, groups in order of first appearance.
inline std::vector<MetricGroup> aggregate_metrics(const CsvTable& t) {
  check_results_schema(t);
  std::vector<int> kc;
  for (const auto& k : metric_group_columns()) kc.push_back(t.require(k));
  std::map<std::vector<std::string>, std::size_t> where;
  std::vector<MetricGroup> out;
  for (const auto& row : t.rows) {
    std::vector<std::string> key;
    for (int c : kc) key.push_back(row[c]);
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, out.size()).first;
      out.push_back({key, 0, {}});
    }
    MetricGroup& g = out[it->second];
    ++g.rows;
    for (const auto& m : metric_names()) g.metrics[m].add(row[t.require(m)], m);
  }
  return out;
}

inline std::string aggregate_metrics_csv(const std::vector<MetricGroup>& groups, const std::vector<std::string>& comments) {
  std::vector<std::string> header = metric_group_columns();
  header.push_back("n_rows");
  for (const auto& m : metric_names()) {
    header.push_back(m + "_mean");
    header.push_back(m + "_n");
  }
  CsvWriter w(header, comments);
  for (const auto& g : groups) {
    std::vector<std::string> row = g.key;
    row.push_back(std::to_string(g.rows));
    for (const auto& m : metric_names()) {
      const auto& mc = g.metrics.at(m);
      row.push_back(format_optional(mc.mean()));
      row.push_back(std::to_string(mc.n));
    }
    w.write_row(row);
  }
  return w.str();
}

/// Wide table of one metric: rows model|rule|threshold, columns scenario|setting
/// (with p and rho appended when several levels are present).
struct HeatmapTable {
  std::string metric;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::optional<double>>> cells;
  bool any() const {
    for (const auto& r : cells)
      for (const auto& v : r)
        if (v) return true;
    return false;
  }
};

inline HeatmapTable heatmap_table(const std::vector<MetricGroup>& groups, const std::string& metric) {
  std::set<std::pair<std::string, std::string>> levels;
  for (const auto& g : groups) levels.insert({g.key[3], g.key[4]});
  const bool multi = levels.size() > 1;
  HeatmapTable h;
  h.metric = metric;
  std::map<std::string, std::size_t> ri, ci;
  for (const auto& g : groups) {
    const std::string r = g.key[5] + " " + g.key[6] + " " + g.key[7] + (g.key[6] == "RCEP" ? " eps=" + g.key[8] : "");
    std::string c = g.key[0] + " " + g.key[1];
    if (multi) c += " p=" + g.key[3] + " rho=" + g.key[4];
    if (!ri.count(r)) {
      ri[r] = h.row_labels.size();
      h.row_labels.push_back(r);
    }
    if (!ci.count(c)) {
      ci[c] = h.col_labels.size();
      h.col_labels.push_back(c);
    }
  }
  h.cells.assign(h.row_labels.size(), std::vector<std::optional<double>>(h.col_labels.size()));
  for (const auto& g : groups) {
    const std::string r = g.key[5] + " " + g.key[6] + " " + g.key[7] + (g.key[6] == "RCEP" ? " eps=" + g.key[8] : "");
    std::string c = g.key[0] + " " + g.key[1];
    if (multi) c += " p=" + g.key[3] + " rho=" + g.key[4];
    h.cells[ri[r]][ci[c]] = g.metrics.at(metric).mean();
  }
  return h;
}

inline std::string heatmap_csv(const HeatmapTable& h, const std::vector<std::string>& comments) {
  std::vector<std::string> header{"model_rule_threshold"};
  header.insert(header.end(), h.col_labels.begin(), h.col_labels.end());
  CsvWriter w(header, comments);
  for (std::size_t r = 0; r < h.row_labels.size(); ++r) {
    std::vector<std::string> row{h.row_labels[r]};
    for (const auto& v : h.cells[r]) row.push_back(format_optional(v));
    w.write_row(row);
  }
  return w.str();
}

struct RrGroup {
  std::vector<std::string> key;  // scenario, setting, direction, baseline_p, rho, model
  std::vector<double> medians;
  std::vector<double> lowers;
  std::vector<double> uppers;
  int covers_one = 0;
};

/// Replicate-level global RR summaries; each replicate counts once however many rules it was scored under.
inline std::vector<RrGroup> aggregate_rr(const CsvTable& t) {
  check_results_schema(t);
  const std::vector<std::string> kn{"scenario", "setting", "direction", "baseline_p", "rho", "model"};
  std::vector<int> kc;
  for (const auto& k : kn) kc.push_back(t.require(k));
  const int rep = t.require("replicate"), med = t.require("rr_median"), lo = t.require("rr_lower"),
            hi = t.require("rr_upper");
  std::map<std::vector<std::string>, std::size_t> where;
  std::set<std::pair<std::size_t, std::string>> seen;
  std::vector<RrGroup> out;
  for (const auto& row : t.rows) {
    std::vector<std::string> key;
    for (int c : kc) key.push_back(row[c]);
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, out.size()).first;
      out.push_back({key, {}, {}, {}, 0});
    }
    if (!seen.insert({it->second, row[rep]}).second) continue;
    RrGroup& g = out[it->second];
    g.medians.push_back(parse_double(row[med], "rr_median"));
    g.lowers.push_back(parse_double(row[lo], "rr_lower"));
    g.uppers.push_back(parse_double(row[hi], "rr_upper"));
    if (g.lowers.back() <= 1.0 && 1.0 <= g.uppers.back()) ++g.covers_one;
  }
  return out;
}

inline std::string rr_summary_csv(const std::vector<RrGroup>& groups, const std::vector<std::string>& comments) {
  CsvWriter w({"scenario", "setting", "direction", "baseline_p", "rho", "model", "n_replicates", "rr_median_mean",
               "rr_median_median", "rr_median_q025", "rr_median_q975", "rr_lower_mean", "rr_upper_mean",
               "ci_covers_1"},
              comments);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  for (const auto& g : groups) {
    const Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(g.medians.data(), static_cast<Eigen::Index>(g.medians.size()));
    std::vector<std::string> row = g.key;
    row.push_back(std::to_string(g.medians.size()));
    row.push_back(format_number(mean(g.medians)));
    row.push_back(format_number(median(m)));
    row.push_back(format_number(quantile(m, 0.025)));
    row.push_back(format_number(quantile(m, 0.975)));
    row.push_back(format_number(mean(g.lowers)));
    row.push_back(format_number(mean(g.uppers)));
    row.push_back(format_number(static_cast<double>(g.covers_one) / static_cast<double>(g.medians.size())));
    w.write_row(row);
  }
  return w.str();
}

}  // namespace mapval::io
