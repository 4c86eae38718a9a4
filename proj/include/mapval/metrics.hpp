#pragma once

// Confusion counts and the four classification metrics. A metric whose
// denominator vanishes is not applicable (empty optional), never zero.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mapval {

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct ClassificationMetrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> fdr;
  std::optional<double> mcc;
};

inline ConfusionCounts confusion(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion: truth and prediction lengths differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i])
      predicted[i] ? ++c.tp : ++c.fn;
    else
      predicted[i] ? ++c.fp : ++c.tn;
  }
  return c;
}

inline ClassificationMetrics score(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) -> std::optional<double> {
    if (den == 0.0) return std::nullopt;
    return num / den;
  };
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  ClassificationMetrics m;
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.fdr = ratio(fp, tp + fp);
  const double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a > 0 && b > 0 && d > 0 && e > 0) m.mcc = (tp * tn - fp * fn) / (std::sqrt(a) * std::sqrt(b) * std::sqrt(d) * std::sqrt(e));
  return m;
}

}  // namespace mapval
