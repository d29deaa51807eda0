#pragma once

// Independent reference implementations used to cross-check the production
// code. Everything here is written loop-by-loop against the math, sharing no
// code with the tape kernels it verifies.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "symx/graph.hpp"
#include "symx/metrics.hpp"
#include "symx/model.hpp"

namespace symx::testsupport {

struct DenseForward {
  Eigen::MatrixXd nodes, edges;          // final embeddings
  std::vector<Eigen::MatrixXd> scores;   // attention per layer, edges × heads
};

// Per-node/per-edge reimplementation of the attention forward pass.
DenseForward dense_forward(const CircuitGraph& g, const ModelParams& params);

std::vector<double> dense_similarities(const CircuitGraph& g, const ModelParams& params,
                                       const std::vector<PairSample>& pairs);

// Multi-source Bellman-Ford over the same hop weights the production code
// derives from device kinds.
std::vector<double> bellman_ford_positions(const CircuitGraph& g);

// Wilcoxon/Mann-Whitney statistic: P(pos > neg) + 0.5·P(tie) over all
// positive/negative similarity pairs.
double mann_whitney_auc(const std::vector<PairOutcome>& outcomes);

struct BruteMetrics {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> tpr, fpr, ppv, acc, f1;
};

BruteMetrics brute_metrics(const std::vector<PairOutcome>& outcomes);

// Relabels nodes so that new index i holds old node order[i]; edge list is
// re-sorted the way the production builder sorts it.
CircuitGraph permute_graph(const CircuitGraph& g, const std::vector<int>& order);

}  // namespace symx::testsupport
