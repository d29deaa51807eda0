#include "symx/metrics.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace symx {

Confusion confusion(const std::vector<PairOutcome>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("confusion: no pairs to evaluate");
  Confusion c;
  for (const PairOutcome& p : pairs) {
    if (p.label != 1 && p.label != -1) throw std::invalid_argument("confusion: labels must be ±1");
    if (p.label == 1)
      ++(p.predicted ? c.tp : c.fn);
    else
      ++(p.predicted ? c.fp : c.tn);
  }
  return c;
}

Confusion merge(const Confusion& a, const Confusion& b) {
  return {a.tp + b.tp, a.fp + b.fp, a.tn + b.tn, a.fn + b.fn};
}

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics compute_metrics(const Confusion& c) {
  Metrics m;
  m.tpr = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.acc = ratio(c.tp + c.tn, c.total());
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

RocCurve roc_auc(const std::vector<PairOutcome>& pairs) {
  long pos = 0, neg = 0;
  for (const PairOutcome& p : pairs) (p.label == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("roc: need at least one positive and one negative pair");

  std::vector<PairOutcome> sorted = pairs;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PairOutcome& a, const PairOutcome& b) { return a.similarity > b.similarity; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    double s = sorted[i].similarity;
    // All pairs tied at this similarity enter together.
    for (; i < sorted.size() && sorted[i].similarity == s; ++i)
      (sorted[i].label == 1 ? tp : fp) += 1;
    curve.points.push_back({s, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }

  double auc = 0.0;
  for (size_t k = 1; k < curve.points.size(); ++k)
    auc += (curve.points[k].fpr - curve.points[k - 1].fpr) *
           (curve.points[k].tpr + curve.points[k - 1].tpr) / 2.0;
  curve.auc = auc;
  return curve;
}

}  // namespace symx
