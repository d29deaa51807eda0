#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "support/oracles.hpp"
#include "support/testutil.hpp"
#include "symx/model.hpp"
#include "symx/netlist.hpp"

using namespace symx;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.node_dim = 16;
  c.edge_dim = 16;
  return c;
}

ModelParams small_params(std::uint64_t seed = 1) {
  ModelConfig c = small_config();
  c.seed = seed;
  return init_params(c, NormStats{});
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.head_dim() == 16);  // 80 / 5

  ModelConfig bad = c;
  bad.node_dim = 81;  // not divisible by 5 heads
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.heads = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.mlp_hidden_mult = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("parameter registry: shapes, names, determinism") {
  ModelParams p = small_params(7);
  REQUIRE(p.names.size() == p.tensors.size());
  // Input projections plus 19 tensors per layer: 4 norm, 4 attention,
  // 3 update, 8 MLP.
  CHECK(p.names.size() == 2 + 19 * 2);

  CHECK(p.at("in_node_proj").shape() == std::vector<int>{kNodeFeatDim, 16});
  CHECK(p.at("in_edge_proj").shape() == std::vector<int>{kEdgeFeatDim, 16});
  CHECK(p.at("l0.att_wi").shape() == std::vector<int>{16, 16});
  CHECK(p.at("l1.att_b").shape() == std::vector<int>{16});
  CHECK(p.at("l0.upd_wt").shape() == std::vector<int>{32, 16});
  CHECK(p.at("l0.mlp_n_w1").shape() == std::vector<int>{16, 32});
  CHECK(p.at("l0.mlp_n_b2").shape() == std::vector<int>{16});
  CHECK(p.index_of("no_such") == -1);
  CHECK_THROWS_AS(p.at("no_such"), std::logic_error);

  // Layer-norm gains start at one, biases at zero.
  CHECK(p.at("l0.ln_node_alpha").flat().minCoeff() == 1.0);
  CHECK(p.at("l0.ln_node_alpha").flat().maxCoeff() == 1.0);
  CHECK(p.at("l0.ln_node_beta").flat().cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.at("l1.mlp_e_b1").flat().cwiseAbs().maxCoeff() == 0.0);

  // Weights draw from a bounded, zero-straddling Glorot range.
  const Tensor& w = p.at("l0.att_wi");
  CHECK(w.flat().minCoeff() < 0.0);
  CHECK(w.flat().maxCoeff() > 0.0);
  CHECK(w.flat().cwiseAbs().maxCoeff() < 1.0);

  // Same seed reproduces bit-identically; a different seed does not.
  ModelParams q = small_params(7);
  for (size_t i = 0; i < p.tensors.size(); ++i)
    CHECK((p.tensors[i].flat() - q.tensors[i].flat()).cwiseAbs().maxCoeff() == 0.0);
  ModelParams r = small_params(8);
  CHECK((p.at("l0.att_wi").flat() - r.at("l0.att_wi").flat()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("logistic pair loss frozen values") {
  // log(1 + exp(0)) at sim·label = 0.
  CHECK(logistic_pair_loss(0.0, 1) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  // Correct confident pair: log(1 + e^{-1}).
  CHECK(logistic_pair_loss(1.0, 1) == doctest::Approx(0.3132616875182228).epsilon(1e-12));
  // Maximally wrong pair: log(1 + e^{1}).
  CHECK(logistic_pair_loss(1.0, -1) == doctest::Approx(1.3132616875182228).epsilon(1e-12));
  CHECK(logistic_pair_loss(-1.0, -1) == doctest::Approx(0.3132616875182228).epsilon(1e-12));
}

TEST_CASE("attention scores are per-source distributions") {
  ModelParams p = small_params(3);
  for (std::uint64_t s : {11ull, 12ull, 13ull}) {
    CircuitGraph g = fuzz_graph(s, 5, 9);
    ForwardTrace tr = forward(g, p);
    REQUIRE(tr.layer_scores.size() == 2);
    for (Tape::Var sv : tr.layer_scores) {
      const Tensor& sc = tr.tape.val(sv);
      REQUIRE(sc.rows() == static_cast<int>(g.edges.size()));
      REQUIRE(sc.cols() == p.config.heads);
      for (size_t v = 0; v < g.nodes.size(); ++v) {
        if (g.out_edges[v].empty()) continue;
        for (int h = 0; h < p.config.heads; ++h) {
          double sum = 0;
          for (int e : g.out_edges[v]) sum += sc.mat()(e, h);
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
        for (int e : g.out_edges[v])
          for (int h = 0; h < p.config.heads; ++h) CHECK(sc.mat()(e, h) >= 0.0);
      }
    }
  }
}

TEST_CASE("forward matches the dense per-edge oracle") {
  ModelParams p = small_params(5);
  for (std::uint64_t s : {21ull, 22ull, 23ull, 24ull}) {
    CircuitGraph g = fuzz_graph(s, 4, 10);
    ForwardTrace tr = forward(g, p);
    testsupport::DenseForward ref = testsupport::dense_forward(g, p);

    const Tensor& fn = tr.tape.val(tr.final_nodes);
    const Tensor& fe = tr.tape.val(tr.final_edges);
    CHECK((fn.mat() - ref.nodes).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fe.mat() - ref.edges).cwiseAbs().maxCoeff() < 1e-10);
    for (size_t l = 0; l < tr.layer_scores.size(); ++l) {
      const Tensor& sc = tr.tape.val(tr.layer_scores[l]);
      CHECK((sc.mat() - ref.scores[l]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("similarities agree with the oracle and with the trace path") {
  ModelParams p = small_params(9);
  CircuitGraph g = fuzz_graph(31, 6, 10);
  std::vector<PairSample> pairs;
  for (int a = 2; a < 5; ++a)
    for (int b = a + 1; b <= 5; ++b) pairs.push_back({a, b, 1});

  std::vector<double> fast = similarities(g, p, pairs);
  std::vector<double> ref = testsupport::dense_similarities(g, p, pairs);
  REQUIRE(fast.size() == pairs.size());
  for (size_t i = 0; i < fast.size(); ++i) {
    CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-10));
    CHECK(fast[i] >= -1.0 - 1e-12);
    CHECK(fast[i] <= 1.0 + 1e-12);
  }

  ForwardTrace tr = forward(g, p);
  const Tensor& sims = tr.tape.val(pair_similarity(tr, pairs));
  for (size_t i = 0; i < fast.size(); ++i)
    CHECK(sims.flat()(static_cast<int>(i)) == doctest::Approx(fast[i]).epsilon(1e-13));
}

TEST_CASE("permutation equivariance on random graphs") {
  ModelParams p = small_params(13);
  std::mt19937_64 rng(99);
  for (std::uint64_t s : {41ull, 42ull, 43ull}) {
    CircuitGraph g = fuzz_graph(s, 5, 10);
    std::vector<int> order(g.nodes.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    CircuitGraph gp = testsupport::permute_graph(g, order);

    ForwardTrace t0 = forward(g, p);
    ForwardTrace t1 = forward(gp, p);
    const Tensor& n0 = t0.tape.val(t0.final_nodes);
    const Tensor& n1 = t1.tape.val(t1.final_nodes);
    for (size_t i = 0; i < order.size(); ++i) {
      double diff = (n1.mat().row(i) - n0.mat().row(order[i])).cwiseAbs().maxCoeff();
      CHECK(diff <= 1e-10);
    }
  }
}

TEST_CASE("structurally identical devices embed identically") {
  // M1 and M2 are interchangeable: swapping them is a graph automorphism that
  // preserves the sorted node order, so their embeddings must match bit for
  // bit and the cosine similarity is exactly one.
  Netlist n = parse_netlist(
      ".SUBCKT twin vdd gnd in out\n"
      "M1 out in gnd gnd nch L=1u W=4u\n"
      "M2 out in gnd gnd nch L=1u W=4u\n"
      "M3 out bias vdd vdd pch L=2u W=9u\n"
      "R1 bias out 10k\n"
      ".ENDS\n");
  NormStats s;
  s.accumulate(n);
  CircuitGraph g = build_graph(n, s);
  int a = g.node_index("M1"), b = g.node_index("M2");
  REQUIRE(a >= 0);
  REQUIRE(b >= 0);

  ModelParams p = small_params(17);
  p.norm = s;
  ForwardTrace tr = forward(g, p);
  const Tensor& fn = tr.tape.val(tr.final_nodes);
  CHECK((fn.mat().row(a) - fn.mat().row(b)).cwiseAbs().maxCoeff() == 0.0);

  std::vector<double> sim = similarities(g, p, {{std::min(a, b), std::max(a, b), 1}});
  CHECK(sim[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("checkpoint round-trip is bit exact") {
  testsupport::TempDir dir("ckpt");
  ModelParams p = small_params(23);
  p.norm.count[0] = 3;
  p.norm.l_min[0] = 1e-7;
  p.norm.l_max[0] = 9e-7;
  p.norm.w_min[0] = 2e-7;
  p.norm.w_max[0] = 8e-6;
  std::string path = dir.file("model.json");
  save_checkpoint(p, path);
  ModelParams q = load_checkpoint(path);

  CHECK(q.config.layers == p.config.layers);
  CHECK(q.config.heads == p.config.heads);
  CHECK(q.config.node_dim == p.config.node_dim);
  CHECK(q.config.similarity_threshold == p.config.similarity_threshold);
  CHECK(q.config.use_gate_feature == p.config.use_gate_feature);
  CHECK(q.norm.count[0] == 3);
  CHECK(q.norm.l_max[0] == 9e-7);
  REQUIRE(q.names == p.names);
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    REQUIRE(q.tensors[i].shape() == p.tensors[i].shape());
    CHECK((q.tensors[i].flat() - p.tensors[i].flat()).cwiseAbs().maxCoeff() == 0.0);
  }

  // Checkpoints guard their identity and layout.
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing.json")), std::runtime_error);
}

TEST_CASE("fuzz graphs are well formed and deterministic") {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    CircuitGraph g = fuzz_graph(s, 4, 8);
    REQUIRE(g.nodes.size() >= 4);
    REQUIRE(g.nodes.size() <= 8);
    CHECK(g.node_features.rows() == static_cast<int>(g.nodes.size()));
    CHECK(g.node_features.cols() == kNodeFeatDim);
    CHECK(g.edge_features.rows() == static_cast<int>(g.edges.size()));

    std::set<std::pair<int, int>> have;
    for (const GraphEdge& e : g.edges) {
      CHECK(e.src != e.dst);
      have.insert({e.src, e.dst});
    }
    for (const GraphEdge& e : g.edges) CHECK(have.count({e.dst, e.src}) == 1);
    for (size_t e = 1; e < g.edges.size(); ++e) {
      auto prev = std::make_pair(g.edges[e - 1].src, g.edges[e - 1].dst);
      auto cur = std::make_pair(g.edges[e].src, g.edges[e].dst);
      CHECK(prev < cur);
    }
    size_t listed = 0;
    for (size_t v = 0; v < g.nodes.size(); ++v) {
      listed += g.out_edges[v].size();
      for (int ei : g.out_edges[v]) CHECK(g.edges[ei].src == static_cast<int>(v));
    }
    CHECK(listed == g.edges.size());
  }
  CircuitGraph a = fuzz_graph(77, 4, 8), b = fuzz_graph(77, 4, 8);
  CHECK(a.nodes.size() == b.nodes.size());
  CHECK((a.node_features - b.node_features).cwiseAbs().maxCoeff() == 0.0);
}
