#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "symx/metrics.hpp"
#include "symx/model.hpp"
#include "symx/postprocess.hpp"
#include "symx/synth.hpp"

namespace symx {

struct TrainConfig {
  int epochs = 500;
  int batch_size = 256;       // pairs per optimizer step
  double learning_rate = 0.002;
  double split_ratio = 0.75;  // fraction of circuits used for training
  std::uint64_t seed = 1;     // drives the split and epoch shuffles
  int checkpoint_every = 0;   // 0 disables periodic snapshots
  std::string checkpoint_path;
  bool verbose = false;       // progress lines on stderr
};

struct SplitIndices {
  std::vector<int> train, test;  // each sorted ascending, disjoint
};

// Seeded circuit-level split; train size is round(ratio·n) clamped to keep
// both sides nonempty.
SplitIndices split_dataset(int n, double ratio, std::uint64_t seed);

struct BatchRef {
  int circuit = 0;  // index into the training-set arrays
  int pair = 0;     // index into that circuit's pair list
};

// One epoch's batches: circuit order and within-circuit pair order are both
// reshuffled, then the concatenation is cut into batch_size chunks. Grouping
// pairs by circuit keeps the number of graph passes per epoch bounded by the
// circuit count.
std::vector<std::vector<BatchRef>> epoch_batches(const std::vector<int>& pairs_per_circuit,
                                                 int batch_size, std::mt19937_64& rng);

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean pair loss per epoch
};

// Trains on the selected circuits from scratch. Feature normalization is
// fitted on the training circuits only and travels with the returned params.
TrainResult train_model(const std::vector<CircuitSample>& dataset,
                        const std::vector<int>& train_indices, const ModelConfig& mcfg,
                        const TrainConfig& tcfg);

struct Prediction {
  PairSample pair;
  double similarity = 0.0;
  bool predicted = false;
};

std::vector<Prediction> infer_pairs(const CircuitGraph& g, const ModelParams& params,
                                    const std::vector<PairSample>& pairs);

struct EvalOptions {
  bool postprocess = true;
  RuleFlags rules;
};

// Full per-circuit pipeline: graph, similarities, threshold, then the
// post-filter unless disabled. Outcomes align with the circuit's valid-pair
// enumeration; removals (if requested) collect the filter log.
std::vector<PairOutcome> evaluate_circuit(const CircuitSample& sample, const ModelParams& params,
                                          const EvalOptions& opt = {},
                                          std::vector<Removal>* removals = nullptr);

}  // namespace symx
