#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "symx/optim.hpp"
#include "symx/synth.hpp"
#include "symx/tape.hpp"
#include "symx/trainer.hpp"

using namespace symx;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.node_dim = 16;
  c.edge_dim = 16;
  return c;
}

std::vector<CircuitSample> tiny_dataset() {
  std::vector<CircuitSample> ds;
  for (int i = 0; i < 3; ++i) ds.push_back(synth_circuit("mixed", 5, i));
  return ds;
}

}  // namespace

TEST_CASE("adam optimizer basics") {
  SUBCASE("zero gradient leaves parameters untouched") {
    std::vector<Tensor> params = {Tensor::from_list({1.0, -2.0})};
    Adam opt(AdamConfig{}, params);
    std::vector<Tensor> grads = {Tensor::zeros({2})};
    opt.step(params, grads);
    CHECK(params[0][0] == 1.0);
    CHECK(params[0][1] == -2.0);
    CHECK(opt.steps() == 1);
  }
  SUBCASE("first step moves by about lr in the gradient's direction") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    std::vector<Tensor> params = {Tensor::from_list({1.0, 1.0, 1.0})};
    Adam opt(cfg, params);
    std::vector<Tensor> grads = {Tensor::from_list({0.5, -0.25, 0.0})};
    opt.step(params, grads);
    // Bias-corrected: update = lr·g/(|g| + eps) ≈ lr·sign(g).
    CHECK(params[0][0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(params[0][1] == doctest::Approx(1.1).epsilon(1e-6));
    CHECK(params[0][2] == 1.0);
  }
  SUBCASE("quadratic bowl converges") {
    std::vector<Tensor> params = {Tensor::from_list({-4.0})};
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam opt(cfg, params);
    for (int i = 0; i < 400; ++i) {
      Tape t;
      auto x = t.input(params[0]);
      auto d = t.add_scalar(x, -3.0);
      t.backward(t.sum(t.hadamard(d, d)));
      opt.step(params, {t.grad(x)});
    }
    CHECK(params[0][0] == doctest::Approx(3.0).epsilon(1e-2));
  }
  SUBCASE("shape mismatches are rejected") {
    std::vector<Tensor> params = {Tensor::from_list({1.0, 2.0})};
    Adam opt(AdamConfig{}, params);
    std::vector<Tensor> bad = {Tensor::from_list({1.0})};
    CHECK_THROWS_AS(opt.step(params, bad), std::invalid_argument);
  }
}

TEST_CASE("circuit split is seeded, disjoint and clamped") {
  SplitIndices s = split_dataset(40, 0.75, 1);
  CHECK(s.train.size() == 30);
  CHECK(s.test.size() == 10);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  CHECK(std::is_sorted(s.test.begin(), s.test.end()));
  std::set<int> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 40);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 39);

  SplitIndices again = split_dataset(40, 0.75, 1);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  SplitIndices other = split_dataset(40, 0.75, 2);
  CHECK(other.train != s.train);

  // Both sides stay nonempty at extreme ratios.
  SplitIndices hi = split_dataset(2, 0.999, 3);
  CHECK(hi.train.size() == 1);
  CHECK(hi.test.size() == 1);
  SplitIndices lo = split_dataset(5, 0.01, 3);
  CHECK(lo.train.size() == 1);
  CHECK(lo.test.size() == 4);

  CHECK_THROWS_AS(split_dataset(1, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(10, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(10, 1.0, 1), std::invalid_argument);
}

TEST_CASE("epoch batches partition all pairs into bounded chunks") {
  std::mt19937_64 rng(6);
  std::vector<int> per_circuit = {5, 0, 9, 3, 12};
  for (int round = 0; round < 10; ++round) {
    std::vector<std::vector<BatchRef>> batches = epoch_batches(per_circuit, 8, rng);
    std::set<std::pair<int, int>> seen;
    int total = 0;
    for (const auto& b : batches) {
      CHECK(!b.empty());
      CHECK(b.size() <= 8);
      for (const BatchRef& r : b) {
        CHECK(r.circuit >= 0);
        CHECK(r.circuit < 5);
        CHECK(r.pair >= 0);
        CHECK(r.pair < per_circuit[r.circuit]);
        CHECK(seen.insert({r.circuit, r.pair}).second);  // no duplicates
        ++total;
      }
    }
    CHECK(total == 5 + 9 + 3 + 12);
    CHECK(batches.size() == (total + 7) / 8);  // every batch full except the last
  }
}

TEST_CASE("training is deterministic and reduces the loss") {
  std::vector<CircuitSample> ds = tiny_dataset();
  std::vector<int> train_idx = {0, 1, 2};
  ModelConfig mcfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 8;
  tcfg.batch_size = 64;
  tcfg.seed = 3;

  TrainResult a = train_model(ds, train_idx, mcfg, tcfg);
  REQUIRE(a.epoch_loss.size() == 8);
  for (double l : a.epoch_loss) CHECK(std::isfinite(l));
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());

  TrainResult b = train_model(ds, train_idx, mcfg, tcfg);
  CHECK(a.epoch_loss == b.epoch_loss);
  REQUIRE(a.params.tensors.size() == b.params.tensors.size());
  for (size_t i = 0; i < a.params.tensors.size(); ++i)
    CHECK((a.params.tensors[i].flat() - b.params.tensors[i].flat()).cwiseAbs().maxCoeff() == 0.0);

  // Normalization stats come from the training circuits.
  int total_count = 0;
  for (int k = 0; k < kDeviceKindCount; ++k) total_count += a.params.norm.count[k];
  int device_count = 0;
  for (const CircuitSample& s : ds) device_count += static_cast<int>(s.netlist.devices.size());
  CHECK(total_count == device_count);

  CHECK_THROWS_AS(train_model(ds, {}, mcfg, tcfg), std::invalid_argument);
  CHECK_THROWS_AS(train_model(ds, {0, 7}, mcfg, tcfg), std::invalid_argument);
}

TEST_CASE("inference applies the strict threshold and evaluation aligns outcomes") {
  std::vector<CircuitSample> ds = tiny_dataset();
  ModelConfig mcfg = tiny_config();
  TrainConfig tcfg;
  tcfg.epochs = 6;
  tcfg.batch_size = 64;
  TrainResult tr = train_model(ds, {0, 1}, mcfg, tcfg);

  const CircuitSample& held = ds[2];
  CircuitGraph g = build_graph(held.netlist, tr.params.norm, tr.params.config.use_gate_feature);
  std::vector<PairSample> pairs = enumerate_valid_pairs(g, &held.groups);
  REQUIRE(!pairs.empty());

  std::vector<Prediction> preds = infer_pairs(g, tr.params, pairs);
  REQUIRE(preds.size() == pairs.size());
  std::vector<double> sims = similarities(g, tr.params, pairs);
  for (size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].similarity == sims[i]);
    CHECK(preds[i].predicted == (sims[i] > tr.params.config.similarity_threshold));
    CHECK(preds[i].pair.a == pairs[i].a);
    CHECK(preds[i].pair.b == pairs[i].b);
  }

  std::vector<Removal> removals;
  std::vector<PairOutcome> with_pp = evaluate_circuit(held, tr.params, {}, &removals);
  EvalOptions no_pp;
  no_pp.postprocess = false;
  std::vector<PairOutcome> raw = evaluate_circuit(held, tr.params, no_pp);
  REQUIRE(with_pp.size() == pairs.size());
  REQUIRE(raw.size() == pairs.size());

  int filtered_away = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(with_pp[i].label == pairs[i].label);
    CHECK(with_pp[i].similarity == raw[i].similarity);
    // Post-processing only ever turns predictions off.
    if (raw[i].predicted)
      filtered_away += !with_pp[i].predicted;
    else
      CHECK(!with_pp[i].predicted);
  }
  CHECK(filtered_away == static_cast<int>(removals.size()));
}
