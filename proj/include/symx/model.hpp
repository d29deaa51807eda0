#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "symx/graph.hpp"
#include "symx/tape.hpp"

namespace symx {

constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
  int layers = 3;
  int heads = 5;
  int node_dim = 80;
  int edge_dim = 80;
  int mlp_hidden_mult = 2;
  double similarity_threshold = 0.6;  // predicted symmetric iff similarity > threshold
  bool use_gate_feature = true;
  std::uint64_t seed = 1;

  int head_dim() const { return node_dim / heads; }
  void validate() const;  // throws std::invalid_argument
};

// Flat ordered parameter registry with stable names; trainer, checkpoints and
// the gradient checker all share this layout.
struct ModelParams {
  ModelConfig config;
  NormStats norm;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  int index_of(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
};

// Glorot-uniform weights (seeded from cfg.seed), unit layer-norm gains,
// zero biases.
ModelParams init_params(const ModelConfig& cfg, const NormStats& norm);

struct TraceParts {
  std::vector<Tape::Var> layer_node_norm, layer_edge_norm;  // n̂, ê per layer
  std::vector<Tape::Var> layer_a;                           // per-edge a_ij per layer
  std::vector<Tape::Var> layer_scores;                      // E×heads attention
  Tape::Var final_nodes, final_edges;
};

struct ForwardTrace {
  Tape tape;
  std::vector<Tape::Var> param_vars;  // aligned with ModelParams::tensors
  std::vector<Tape::Var> layer_node_norm, layer_edge_norm;
  std::vector<Tape::Var> layer_a;
  std::vector<Tape::Var> layer_scores;
  Tape::Var final_nodes, final_edges;
};

// Builds the forward pass on a caller-owned tape whose parameter vars are
// already registered (aligned with params.tensors); the gradient checker
// composes its loss this way.
TraceParts forward_on(Tape& t, const std::vector<Tape::Var>& param_vars,
                      const ModelParams& params, const CircuitGraph& g);

// Full tape forward over one graph. The trace owns the tape, so callers can
// keep composing (pair similarities, losses) and then run backward.
ForwardTrace forward(const CircuitGraph& g, const ModelParams& params);

// Cosine similarity of the final node embeddings for each pair (adds tape
// nodes to the trace). Throws on a zero-norm embedding.
Tape::Var pair_similarity_on(Tape& t, Tape::Var final_nodes, const std::vector<PairSample>& pairs);
Tape::Var pair_similarity(ForwardTrace& tr, const std::vector<PairSample>& pairs);

// Mean logistic loss log(1 + exp(−label·sim)) over the pairs.
Tape::Var pair_loss_on(Tape& t, Tape::Var sims, const std::vector<PairSample>& pairs);
Tape::Var pair_loss(ForwardTrace& tr, Tape::Var sims, const std::vector<PairSample>& pairs);

double logistic_pair_loss(double sim, int label);

// Tape-level conveniences for inference.
std::vector<double> similarities(const CircuitGraph& g, const ModelParams& params,
                                 const std::vector<PairSample>& pairs);

void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);  // rejects layout/config mismatch

// Random connected graph with well-formed shapes (rails first, then devices;
// uniform feature noise). Circuit semantics don't hold; meant for numeric
// checks of the forward/backward passes.
CircuitGraph fuzz_graph(std::uint64_t seed, int min_nodes, int max_nodes);

}  // namespace symx
