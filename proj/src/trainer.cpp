#include "symx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "symx/optim.hpp"

namespace symx {

namespace {

// Distinct deterministic streams for the split and the epoch shuffles.
std::uint64_t mix64(std::uint64_t x, std::uint64_t salt) {
  x ^= salt + 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

SplitIndices split_dataset(int n, double ratio, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("need at least two circuits to split");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must be in (0, 1)");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix64(seed, 0x5917));
  std::shuffle(order.begin(), order.end(), rng);

  int k = static_cast<int>(std::llround(ratio * n));
  k = std::clamp(k, 1, n - 1);

  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + k);
  out.test.assign(order.begin() + k, order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<std::vector<BatchRef>> epoch_batches(const std::vector<int>& pairs_per_circuit,
                                                 int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");

  std::vector<int> circuit_order(pairs_per_circuit.size());
  std::iota(circuit_order.begin(), circuit_order.end(), 0);
  std::shuffle(circuit_order.begin(), circuit_order.end(), rng);

  std::vector<BatchRef> stream;
  for (int c : circuit_order) {
    std::vector<int> pair_order(pairs_per_circuit[c]);
    std::iota(pair_order.begin(), pair_order.end(), 0);
    std::shuffle(pair_order.begin(), pair_order.end(), rng);
    for (int p : pair_order) stream.push_back({c, p});
  }

  std::vector<std::vector<BatchRef>> batches;
  for (size_t at = 0; at < stream.size(); at += batch_size) {
    size_t end = std::min(stream.size(), at + batch_size);
    batches.emplace_back(stream.begin() + at, stream.begin() + end);
  }
  return batches;
}

TrainResult train_model(const std::vector<CircuitSample>& dataset,
                        const std::vector<int>& train_indices, const ModelConfig& mcfg,
                        const TrainConfig& tcfg) {
  mcfg.validate();
  if (train_indices.empty()) throw std::invalid_argument("empty training set");
  if (tcfg.epochs < 1) throw std::invalid_argument("epochs must be positive");
  for (int i : train_indices)
    if (i < 0 || i >= static_cast<int>(dataset.size()))
      throw std::out_of_range("train index outside dataset");

  NormStats norm;
  for (int i : train_indices) norm.accumulate(dataset[i].netlist);

  std::vector<CircuitGraph> graphs;
  std::vector<std::vector<PairSample>> pairs;
  std::vector<int> counts;
  graphs.reserve(train_indices.size());
  for (int i : train_indices) {
    graphs.push_back(build_graph(dataset[i].netlist, norm, mcfg.use_gate_feature));
    pairs.push_back(enumerate_valid_pairs(graphs.back(), &dataset[i].groups));
    counts.push_back(static_cast<int>(pairs.back().size()));
  }
  if (std::accumulate(counts.begin(), counts.end(), 0) == 0)
    throw std::runtime_error("training circuits contain no valid pairs");

  TrainResult res;
  res.params = init_params(mcfg, norm);
  Adam adam(AdamConfig{.lr = tcfg.learning_rate}, res.params.tensors);
  std::mt19937_64 shuffle_rng(mix64(tcfg.seed, 0xba7c4));

  const size_t n_params = res.params.tensors.size();
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    size_t pair_count = 0;

    for (const auto& batch : epoch_batches(counts, tcfg.batch_size, shuffle_rng)) {
      // Pairs regrouped by circuit: one tape per circuit, not per pair.
      std::map<int, std::vector<PairSample>> by_circuit;
      for (const BatchRef& r : batch) by_circuit[r.circuit].push_back(pairs[r.circuit][r.pair]);

      std::vector<Tensor> grad_acc;
      grad_acc.reserve(n_params);
      for (const Tensor& t : res.params.tensors) grad_acc.push_back(Tensor::zeros_like(t));

      double batch_loss = 0.0;
      for (const auto& [c, cpairs] : by_circuit) {
        ForwardTrace tr = forward(graphs[c], res.params);
        Tape::Var sims = pair_similarity(tr, cpairs);
        Tape::Var mean_loss = pair_loss(tr, sims, cpairs);
        // Rescale the per-circuit mean so the batch as a whole averages
        // uniformly over its pairs.
        Tape::Var root = tr.tape.scale(mean_loss, static_cast<double>(cpairs.size()) / batch.size());
        tr.tape.backward(root);
        batch_loss += tr.tape.val(root).value();
        for (size_t i = 0; i < n_params; ++i)
          grad_acc[i].flat() += tr.tape.grad(tr.param_vars[i]).flat();
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch + 1));

      adam.step(res.params.tensors, grad_acc);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      pair_count += batch.size();
    }

    res.epoch_loss.push_back(loss_sum / static_cast<double>(pair_count));
    if (tcfg.verbose && ((epoch + 1) % 25 == 0 || epoch == 0))
      std::cerr << "epoch " << (epoch + 1) << "/" << tcfg.epochs << "  loss "
                << res.epoch_loss.back() << "\n";
    if (tcfg.checkpoint_every > 0 && !tcfg.checkpoint_path.empty() &&
        (epoch + 1) % tcfg.checkpoint_every == 0)
      save_checkpoint(res.params, tcfg.checkpoint_path);
  }
  return res;
}

std::vector<Prediction> infer_pairs(const CircuitGraph& g, const ModelParams& params,
                                    const std::vector<PairSample>& pairs) {
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  if (pairs.empty()) return out;
  std::vector<double> sims = similarities(g, params, pairs);
  for (size_t i = 0; i < pairs.size(); ++i)
    out.push_back({pairs[i], sims[i], sims[i] > params.config.similarity_threshold});
  return out;
}

std::vector<PairOutcome> evaluate_circuit(const CircuitSample& sample, const ModelParams& params,
                                          const EvalOptions& opt, std::vector<Removal>* removals) {
  CircuitGraph g = build_graph(sample.netlist, params.norm, params.config.use_gate_feature);
  std::vector<PairSample> pairs = enumerate_valid_pairs(g, &sample.groups);
  std::vector<Prediction> preds = infer_pairs(g, params, pairs);

  std::set<std::pair<int, int>> kept;
  if (opt.postprocess) {
    std::vector<PairSample> positive;
    for (const Prediction& p : preds)
      if (p.predicted) positive.push_back(p.pair);
    std::vector<double> positions = device_positions(g);
    FilterResult fr = apply_rules(positive, g, sample.netlist, positions, opt.rules);
    for (const PairSample& p : fr.kept) kept.insert({p.a, p.b});
    if (removals)
      removals->insert(removals->end(), fr.removed.begin(), fr.removed.end());
  }

  std::vector<PairOutcome> out;
  out.reserve(preds.size());
  for (const Prediction& p : preds) {
    bool final_pred = opt.postprocess ? kept.count({p.pair.a, p.pair.b}) > 0 : p.predicted;
    out.push_back({p.similarity, final_pred, p.pair.label});
  }
  return out;
}

}  // namespace symx
