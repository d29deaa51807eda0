#pragma once

#include <optional>
#include <vector>

namespace symx {

// One scored pair at evaluation time.
struct PairOutcome {
  double similarity = 0.0;
  bool predicted = false;
  int label = -1;  // ±1
};

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

Confusion confusion(const std::vector<PairOutcome>& pairs);  // throws on empty input
Confusion merge(const Confusion& a, const Confusion& b);     // sums counts across circuits

// Ratios with zero denominators stay unset ("undefined"), never 0.
struct Metrics {
  std::optional<double> tpr, fpr, ppv, acc, f1;
};

Metrics compute_metrics(const Confusion& c);

struct RocPoint {
  double threshold = 0.0;  // +inf on the leading (0,0) point
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending, fpr ascending, ends at (1,1)
  double auc = 0.0;              // trapezoidal; equals Mann-Whitney with ½ tie credit
};

// Sweeps every distinct similarity as a threshold (ties enter together).
// Throws if the input lacks a positive or lacks a negative pair.
RocCurve roc_auc(const std::vector<PairOutcome>& pairs);

}  // namespace symx
