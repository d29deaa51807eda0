#include "symx/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "json.hpp"

namespace symx {

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("model: layers must be at least 1");
  if (heads < 1) throw std::invalid_argument("model: heads must be at least 1");
  if (node_dim <= 0 || edge_dim <= 0) throw std::invalid_argument("model: dims must be positive");
  if (node_dim != edge_dim)
    throw std::invalid_argument("model: node and edge widths must match (identity reshape)");
  if (node_dim % heads != 0) throw std::invalid_argument("model: heads must divide node width");
  if (mlp_hidden_mult < 1) throw std::invalid_argument("model: mlp multiplier must be at least 1");
  if (!(similarity_threshold > -1.0 && similarity_threshold < 1.0))
    throw std::invalid_argument("model: similarity threshold must lie in (-1, 1)");
}

namespace {

enum class Init { glorot, ones, zeros };

struct Slot {
  std::string name;
  std::vector<int> shape;
  Init init;
};

std::vector<Slot> layout(const ModelConfig& c) {
  int dn = c.node_dim, de = c.edge_dim, dh = c.mlp_hidden_mult * dn;
  std::vector<Slot> slots = {{"in_node_proj", {kNodeFeatDim, dn}, Init::glorot},
                             {"in_edge_proj", {kEdgeFeatDim, de}, Init::glorot}};
  for (int l = 0; l < c.layers; ++l) {
    std::string p = "l" + std::to_string(l) + ".";
    auto add = [&](const char* n, std::vector<int> s, Init i) { slots.push_back({p + n, std::move(s), i}); };
    add("ln_node_alpha", {dn}, Init::ones);
    add("ln_node_beta", {dn}, Init::zeros);
    add("ln_edge_alpha", {de}, Init::ones);
    add("ln_edge_beta", {de}, Init::zeros);
    add("att_wi", {dn, dn}, Init::glorot);
    add("att_wj", {dn, dn}, Init::glorot);
    add("att_we", {de, de}, Init::glorot);
    add("att_b", {de}, Init::glorot);
    add("upd_wk", {dn, dn}, Init::glorot);
    add("upd_we", {de, de}, Init::glorot);
    add("upd_wt", {dn + de, dn}, Init::glorot);
    add("mlp_n_w1", {dn, dh}, Init::glorot);
    add("mlp_n_b1", {dh}, Init::zeros);
    add("mlp_n_w2", {dh, dn}, Init::glorot);
    add("mlp_n_b2", {dn}, Init::zeros);
    add("mlp_e_w1", {de, c.mlp_hidden_mult * de}, Init::glorot);
    add("mlp_e_b1", {c.mlp_hidden_mult * de}, Init::zeros);
    add("mlp_e_w2", {c.mlp_hidden_mult * de, de}, Init::glorot);
    add("mlp_e_b2", {de}, Init::zeros);
  }
  return slots;
}

Tensor make_tensor(const Slot& s, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(s.shape);
  switch (s.init) {
    case Init::zeros:
      break;
    case Init::ones:
      t.flat().setOnes();
      break;
    case Init::glorot: {
      // Rank-1 slots act as a d→1 map for fan purposes.
      double fan_in = static_cast<double>(t.rows());
      double fan_out = static_cast<double>(s.shape.size() == 2 ? t.cols() : 1);
      double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (int i = 0; i < t.numel(); ++i) t[i] = dist(rng);
      break;
    }
  }
  return t;
}

Tape::Var layer_norm(Tape& t, Tape::Var x, Tape::Var alpha, Tape::Var beta) {
  Tape::Var mu = t.rows_mean(x);
  Tape::Var c = t.sub_cols(x, mu);
  Tape::Var var = t.rows_mean(t.hadamard(c, c));  // population variance
  Tape::Var sd = t.sqrt(t.add_scalar(var, kLayerNormEps));
  return t.add_rows(t.mul_rows(t.div_cols(c, sd), alpha), beta);
}

Tape::Var mlp2(Tape& t, Tape::Var x, Tape::Var w1, Tape::Var b1, Tape::Var w2, Tape::Var b2) {
  return t.add_rows(t.matmul(t.relu(t.add_rows(t.matmul(x, w1), b1)), w2), b2);
}

}  // namespace

int ModelParams::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

const Tensor& ModelParams::at(const std::string& name) const {
  int i = index_of(name);
  if (i < 0) throw std::logic_error("unknown parameter '" + name + "'");
  return tensors[i];
}

ModelParams init_params(const ModelConfig& cfg, const NormStats& norm) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.norm = norm;
  std::mt19937_64 rng(cfg.seed);
  for (const Slot& s : layout(cfg)) {
    p.names.push_back(s.name);
    p.tensors.push_back(make_tensor(s, rng));
  }
  return p;
}

TraceParts forward_on(Tape& t, const std::vector<Tape::Var>& param_vars,
                      const ModelParams& params, const CircuitGraph& g) {
  params.config.validate();
  if (g.nodes.empty()) throw std::invalid_argument("forward: empty graph");
  if (param_vars.size() != params.tensors.size())
    throw std::invalid_argument("forward: parameter vars do not match the model layout");
  int n_nodes = static_cast<int>(g.nodes.size());
  int hd = params.config.head_dim();

  TraceParts tr;
  auto pv = [&](const std::string& name) {
    int i = params.index_of(name);
    if (i < 0) throw std::logic_error("forward: missing parameter '" + name + "'");
    return param_vars[i];
  };

  std::vector<int> src, dst;
  src.reserve(g.edges.size());
  dst.reserve(g.edges.size());
  for (const GraphEdge& e : g.edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
  }

  Tape::Var n = t.matmul(t.constant(Tensor::from_matrix(g.node_features)), pv("in_node_proj"));
  Tape::Var e = t.matmul(t.constant(Tensor::from_matrix(g.edge_features)), pv("in_edge_proj"));

  for (int l = 0; l < params.config.layers; ++l) {
    std::string p = "l" + std::to_string(l) + ".";
    Tape::Var nh = layer_norm(t, n, pv(p + "ln_node_alpha"), pv(p + "ln_node_beta"));
    Tape::Var eh = layer_norm(t, e, pv(p + "ln_edge_alpha"), pv(p + "ln_edge_beta"));
    tr.layer_node_norm.push_back(nh);
    tr.layer_edge_norm.push_back(eh);

    // a_ij = (W_i n̂_i) ⊙ (W_j n̂_j) + W_e ê_ij  (the reshape between node and
    // edge width is the identity because the widths are equal).
    Tape::Var ui = t.gather_rows(t.matmul(nh, pv(p + "att_wi")), src);
    Tape::Var vj = t.gather_rows(t.matmul(nh, pv(p + "att_wj")), dst);
    Tape::Var a = t.add(t.hadamard(ui, vj), t.matmul(eh, pv(p + "att_we")));
    tr.layer_a.push_back(a);

    // Per-head logit bᵀa over contiguous head slices, softmax over each
    // node's neighborhood (segments keyed by the edge's source node).
    Tape::Var logits = t.block_row_sums(t.mul_rows(a, pv(p + "att_b")), hd);
    Tape::Var s = t.segment_softmax(logits, src, n_nodes);
    tr.layer_scores.push_back(s);

    Tape::Var kn = t.gather_rows(t.matmul(nh, pv(p + "upd_wk")), dst);
    Tape::Var ke = t.matmul(eh, pv(p + "upd_we"));
    Tape::Var sx = t.expand_cols_blocks(s, hd);
    Tape::Var msg = t.concat_cols(t.hadamard(kn, sx), t.hadamard(ke, sx));
    Tape::Var pooled = t.segment_sum(msg, src, n_nodes);
    Tape::Var nres = t.add(n, t.matmul(pooled, pv(p + "upd_wt")));
    n = mlp2(t, nres, pv(p + "mlp_n_w1"), pv(p + "mlp_n_b1"), pv(p + "mlp_n_w2"),
             pv(p + "mlp_n_b2"));

    Tape::Var eres = t.add(e, a);
    e = mlp2(t, eres, pv(p + "mlp_e_w1"), pv(p + "mlp_e_b1"), pv(p + "mlp_e_w2"),
             pv(p + "mlp_e_b2"));
  }
  tr.final_nodes = n;
  tr.final_edges = e;
  return tr;
}

ForwardTrace forward(const CircuitGraph& g, const ModelParams& params) {
  ForwardTrace tr;
  tr.param_vars.reserve(params.tensors.size());
  for (const Tensor& w : params.tensors) tr.param_vars.push_back(tr.tape.input(w));
  TraceParts parts = forward_on(tr.tape, tr.param_vars, params, g);
  tr.layer_node_norm = std::move(parts.layer_node_norm);
  tr.layer_edge_norm = std::move(parts.layer_edge_norm);
  tr.layer_a = std::move(parts.layer_a);
  tr.layer_scores = std::move(parts.layer_scores);
  tr.final_nodes = parts.final_nodes;
  tr.final_edges = parts.final_edges;
  return tr;
}

Tape::Var pair_similarity_on(Tape& t, Tape::Var final_nodes, const std::vector<PairSample>& pairs) {
  std::vector<int> ia, ib;
  ia.reserve(pairs.size());
  ib.reserve(pairs.size());
  for (const PairSample& p : pairs) {
    ia.push_back(p.a);
    ib.push_back(p.b);
  }
  Tape::Var a = t.gather_rows(final_nodes, ia);
  Tape::Var b = t.gather_rows(final_nodes, ib);
  Tape::Var na = t.sqrt(t.rows_dot(a, a));
  Tape::Var nb = t.sqrt(t.rows_dot(b, b));
  for (int i = 0; i < t.val(na).numel(); ++i)
    if (t.val(na)[i] == 0.0 || t.val(nb)[i] == 0.0)
      throw std::runtime_error("zero-norm node embedding in cosine similarity");
  return t.div(t.rows_dot(a, b), t.hadamard(na, nb));
}

Tape::Var pair_similarity(ForwardTrace& tr, const std::vector<PairSample>& pairs) {
  return pair_similarity_on(tr.tape, tr.final_nodes, pairs);
}

Tape::Var pair_loss_on(Tape& t, Tape::Var sims, const std::vector<PairSample>& pairs) {
  Tensor labels = Tensor::zeros({static_cast<int>(pairs.size())});
  for (size_t i = 0; i < pairs.size(); ++i) labels[static_cast<int>(i)] = pairs[i].label;
  Tape::Var gs = t.hadamard(t.constant(std::move(labels)), sims);
  return t.mean(t.log(t.add_scalar(t.exp(t.scale(gs, -1.0)), 1.0)));
}

Tape::Var pair_loss(ForwardTrace& tr, Tape::Var sims, const std::vector<PairSample>& pairs) {
  return pair_loss_on(tr.tape, sims, pairs);
}

double logistic_pair_loss(double sim, int label) { return std::log1p(std::exp(-label * sim)); }

std::vector<double> similarities(const CircuitGraph& g, const ModelParams& params,
                                 const std::vector<PairSample>& pairs) {
  ForwardTrace tr = forward(g, params);
  if (pairs.empty()) return {};
  Tape::Var sims = pair_similarity(tr, pairs);
  const Tensor& v = tr.tape.val(sims);
  return {v.data(), v.data() + v.numel()};
}

namespace {

nlohmann::json norm_to_json(const NormStats& n) {
  return {{"count", n.count}, {"l_min", n.l_min}, {"l_max", n.l_max},
          {"w_min", n.w_min}, {"w_max", n.w_max}};
}

NormStats norm_from_json(const nlohmann::json& j) {
  NormStats n;
  j.at("count").get_to(n.count);
  j.at("l_min").get_to(n.l_min);
  j.at("l_max").get_to(n.l_max);
  j.at("w_min").get_to(n.w_min);
  j.at("w_max").get_to(n.w_max);
  return n;
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
  nlohmann::json j;
  j["format"] = "egat-checkpoint";
  j["version"] = 1;
  j["config"] = {{"layers", p.config.layers},
                 {"heads", p.config.heads},
                 {"node_dim", p.config.node_dim},
                 {"edge_dim", p.config.edge_dim},
                 {"mlp_hidden_mult", p.config.mlp_hidden_mult},
                 {"similarity_threshold", p.config.similarity_threshold},
                 {"use_gate_feature", p.config.use_gate_feature},
                 {"seed", p.config.seed}};
  j["norm"] = norm_to_json(p.norm);
  j["tensors"] = nlohmann::json::array();
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    const Tensor& t = p.tensors[i];
    j["tensors"].push_back({{"name", p.names[i]},
                            {"shape", t.shape()},
                            {"data", std::vector<double>(t.data(), t.data() + t.numel())}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << j.dump() << '\n';
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad checkpoint JSON: " + std::string(e.what()));
  }
  if (j.value("format", "") != "egat-checkpoint" || j.value("version", 0) != 1)
    throw std::runtime_error("unrecognized checkpoint format");

  ModelConfig cfg;
  const auto& jc = j.at("config");
  cfg.layers = jc.at("layers").get<int>();
  cfg.heads = jc.at("heads").get<int>();
  cfg.node_dim = jc.at("node_dim").get<int>();
  cfg.edge_dim = jc.at("edge_dim").get<int>();
  cfg.mlp_hidden_mult = jc.at("mlp_hidden_mult").get<int>();
  cfg.similarity_threshold = jc.at("similarity_threshold").get<double>();
  cfg.use_gate_feature = jc.at("use_gate_feature").get<bool>();
  cfg.seed = jc.at("seed").get<std::uint64_t>();
  cfg.validate();

  ModelParams p = init_params(cfg, norm_from_json(j.at("norm")));
  const auto& jt = j.at("tensors");
  if (jt.size() != p.tensors.size())
    throw std::runtime_error("checkpoint does not match model layout (tensor count)");
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    if (jt[i].at("name").get<std::string>() != p.names[i])
      throw std::runtime_error("checkpoint does not match model layout at '" + p.names[i] + "'");
    if (jt[i].at("shape").get<std::vector<int>>() != p.tensors[i].shape())
      throw std::runtime_error("checkpoint tensor shape mismatch at '" + p.names[i] + "'");
    auto data = jt[i].at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != p.tensors[i].numel())
      throw std::runtime_error("checkpoint tensor size mismatch at '" + p.names[i] + "'");
    std::copy(data.begin(), data.end(), p.tensors[i].data());
  }
  return p;
}

CircuitGraph fuzz_graph(std::uint64_t seed, int min_nodes, int max_nodes) {
  if (min_nodes < 2 || max_nodes < min_nodes)
    throw std::invalid_argument("fuzz_graph needs 2 <= min_nodes <= max_nodes");
  std::mt19937_64 rng(seed);
  auto below = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  const int n = min_nodes + below(max_nodes - min_nodes + 1);

  CircuitGraph g;
  g.name = "fuzz_" + std::to_string(seed);
  for (int i = 0; i < n; ++i) {
    GraphNode nd;
    nd.id = "n" + std::to_string(i);
    if (i == 0) {
      nd.kind = DeviceKind::io;
      nd.is_power = true;
    } else if (i == 1) {
      nd.kind = DeviceKind::io;
      nd.is_ground = true;
    } else {
      nd.kind = static_cast<DeviceKind>(below(kDeviceKindCount - 1));  // any device kind
      nd.device_index = i - 2;
    }
    g.nodes.push_back(std::move(nd));
  }

  // Spanning tree keeps every node reachable from the rails; extras add cycles.
  std::set<std::pair<int, int>> und;
  for (int i = 1; i < n; ++i) und.insert(std::minmax(i, below(i)));
  for (int k = 0; k < n; ++k) {
    int a = below(n), b = below(n);
    if (a != b) und.insert(std::minmax(a, b));
  }
  for (const auto& [a, b] : und) {
    g.edges.push_back({a, b});
    g.edges.push_back({b, a});
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const GraphEdge& x, const GraphEdge& y) {
              return std::tie(x.src, x.dst) < std::tie(y.src, y.dst);
            });

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  g.node_features.resize(n, kNodeFeatDim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kNodeFeatDim; ++j) g.node_features(i, j) = uni(rng);
  g.edge_features.resize(static_cast<Eigen::Index>(g.edges.size()), kEdgeFeatDim);
  for (Eigen::Index i = 0; i < g.edge_features.rows(); ++i)
    for (int j = 0; j < kEdgeFeatDim; ++j) g.edge_features(i, j) = uni(rng);

  g.out_edges.assign(n, {});
  for (size_t e = 0; e < g.edges.size(); ++e) g.out_edges[g.edges[e].src].push_back(static_cast<int>(e));
  return g;
}

}  // namespace symx
