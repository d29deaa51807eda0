#include "symx/graph.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"

namespace symx {

namespace {

int kind_index(DeviceKind k) { return static_cast<int>(k); }

// EdgeFeature bit for a pin role on the shared net.
int edge_bit(PinRole r) {
  switch (r) {
    case PinRole::gate: return 0;
    case PinRole::drain: return 1;
    case PinRole::source: return 2;
    case PinRole::terminal_a:
    case PinRole::terminal_b: return 3;
    default: return 4;  // bulk, BJT and diode pins
  }
}

constexpr int kIoBit = 4;

void warn(std::vector<std::string>* sink, const std::string& msg) {
  if (sink) sink->push_back(msg);
}

}  // namespace

void NormStats::accumulate(const Netlist& n) {
  for (const Device& d : n.devices) {
    int k = kind_index(d.kind);
    double l = d.length, w = d.unit_width();
    if (count[k] == 0) {
      l_min[k] = l_max[k] = l;
      w_min[k] = w_max[k] = w;
    } else {
      l_min[k] = std::min(l_min[k], l);
      l_max[k] = std::max(l_max[k], l);
      w_min[k] = std::min(w_min[k], w);
      w_max[k] = std::max(w_max[k], w);
    }
    ++count[k];
  }
}

bool NormStats::degenerate_length(DeviceKind k) const {
  int i = kind_index(k);
  return count[i] == 0 || l_min[i] == l_max[i];
}

bool NormStats::degenerate_width(DeviceKind k) const {
  int i = kind_index(k);
  return count[i] == 0 || w_min[i] == w_max[i];
}

double NormStats::norm_length(DeviceKind k, double l) const {
  if (degenerate_length(k)) return 0.5;
  int i = kind_index(k);
  return std::clamp((l - l_min[i]) / (l_max[i] - l_min[i]), 0.0, 1.0);
}

double NormStats::norm_width(DeviceKind k, double w) const {
  if (degenerate_width(k)) return 0.5;
  int i = kind_index(k);
  return std::clamp((w - w_min[i]) / (w_max[i] - w_min[i]), 0.0, 1.0);
}

int CircuitGraph::node_index(const std::string& id) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

std::vector<GraphNode> graph_nodes(const Netlist& n) {
  std::vector<GraphNode> nodes;
  std::vector<int> dev_order(n.devices.size());
  for (size_t i = 0; i < dev_order.size(); ++i) dev_order[i] = static_cast<int>(i);
  std::sort(dev_order.begin(), dev_order.end(),
            [&](int a, int b) { return n.devices[a].id < n.devices[b].id; });
  for (int i : dev_order)
    nodes.push_back({n.devices[i].id, n.devices[i].kind, i, false, false});

  std::set<std::string> io_nets(n.io_ports.begin(), n.io_ports.end());
  io_nets.insert(n.power_nets.begin(), n.power_nets.end());
  io_nets.insert(n.ground_nets.begin(), n.ground_nets.end());
  for (const std::string& net : io_nets)
    nodes.push_back({net, DeviceKind::io, -1, n.power_nets.count(net) > 0,
                     n.ground_nets.count(net) > 0});
  return nodes;
}

Eigen::MatrixXd encode_node_features(const Netlist& n, const std::vector<GraphNode>& nodes,
                                     const NormStats& stats, bool use_gate_feature,
                                     std::vector<std::string>* warnings) {
  // Nets whose gates tie together, per MOS kind, and nets owning an IO node.
  std::map<std::string, std::array<int, 2>> gate_counts;  // net -> {nmos, pmos} gate count
  for (const Device& d : n.devices)
    if (is_mos(d.kind))
      ++gate_counts[d.find_pin(PinRole::gate)->net][d.kind == DeviceKind::pmos ? 1 : 0];
  std::set<std::string> io_nets(n.io_ports.begin(), n.io_ports.end());
  io_nets.insert(n.power_nets.begin(), n.power_nets.end());
  io_nets.insert(n.ground_nets.begin(), n.ground_nets.end());

  std::set<std::string> warned;
  auto warn_once = [&](DeviceKind k, const char* dim) {
    std::string key = std::string(to_string(k)) + dim;
    if (warned.insert(key).second)
      warn(warnings, std::string("zero-range size normalization for ") + to_string(k) + " " + dim +
                         "; using 0.5");
  };

  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(static_cast<int>(nodes.size()), kNodeFeatDim);
  for (size_t i = 0; i < nodes.size(); ++i) {
    const GraphNode& node = nodes[i];
    f(i, kind_index(node.kind)) = 1.0;
    if (node.kind == DeviceKind::io) {
      f(i, 9) = f(i, 10) = -1.0;
      f(i, 11) = 1.0;  // non-MOS
      continue;
    }
    const Device& d = n.devices[node.device_index];
    if (stats.degenerate_length(d.kind)) warn_once(d.kind, " length");
    if (stats.degenerate_width(d.kind)) warn_once(d.kind, " width");
    f(i, 9) = stats.norm_length(d.kind, d.length);
    f(i, 10) = stats.norm_width(d.kind, d.unit_width());
    if (!is_mos(d.kind)) {
      f(i, 11) = 1.0;
    } else {
      const std::string& gn = d.find_pin(PinRole::gate)->net;
      if (gate_counts[gn][d.kind == DeviceKind::pmos ? 1 : 0] >= 2)
        f(i, 12) = 1.0;  // gate tied to a gate of the same kind
      else if (io_nets.count(gn) > 0)
        f(i, 13) = 1.0;  // gate tied to an IO
      else
        f(i, 14) = 1.0;
    }
  }
  if (!use_gate_feature) f.rightCols(4).setZero();
  return f;
}

CircuitGraph build_graph(const Netlist& n, const NormStats& stats, bool use_gate_feature,
                         std::vector<std::string>* warnings) {
  if (n.devices.empty()) throw std::runtime_error("empty netlist: no devices");

  CircuitGraph g;
  g.name = n.name;
  g.nodes = graph_nodes(n);
  g.node_features = encode_node_features(n, g.nodes, stats, use_gate_feature, warnings);

  std::map<std::string, int> node_of_net;  // IO nodes only
  for (size_t i = 0; i < g.nodes.size(); ++i)
    if (g.nodes[i].kind == DeviceKind::io) node_of_net[g.nodes[i].id] = static_cast<int>(i);

  // Per net: member node -> OR of its pin-role bits on that net.
  std::map<std::string, std::map<int, unsigned>> members;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const GraphNode& node = g.nodes[i];
    if (node.kind == DeviceKind::io) {
      members[node.id][static_cast<int>(i)] |= 1u << kIoBit;
      continue;
    }
    for (const Pin& p : n.devices[node.device_index].pins)
      members[p.net][static_cast<int>(i)] |= 1u << edge_bit(p.role);
  }

  std::map<std::pair<int, int>, unsigned> merged;
  auto connect = [&](int u, int v, const std::map<int, unsigned>& m) {
    merged[{u, v}] |= m.at(v);
    merged[{v, u}] |= m.at(u);
  };
  for (const auto& [net, m] : members) {
    if (m.size() < 2) {
      warn(warnings, "net '" + net + "' has a single connection; no edge");
      continue;
    }
    bool rail = n.power_nets.count(net) > 0 || n.ground_nets.count(net) > 0;
    if (rail) {
      // Rail nets fan out from the rail node only; they do not clique their
      // members together (a shared supply does not make two devices neighbors).
      int r = node_of_net.at(net);
      for (const auto& [v, bits] : m)
        if (v != r) connect(r, v, m);
    } else {
      for (auto a = m.begin(); a != m.end(); ++a)
        for (auto b = std::next(a); b != m.end(); ++b) connect(a->first, b->first, m);
    }
  }

  g.edges.reserve(merged.size());
  g.edge_features = Eigen::MatrixXd::Zero(static_cast<int>(merged.size()), kEdgeFeatDim);
  g.out_edges.assign(g.nodes.size(), {});
  int e = 0;
  for (const auto& [key, bits] : merged) {
    g.edges.push_back({key.first, key.second});
    for (int b = 0; b < kEdgeFeatDim; ++b)
      if (bits & (1u << b)) g.edge_features(e, b) = 1.0;
    g.out_edges[key.first].push_back(e);
    ++e;
  }
  return g;
}

SymmetryGroups groups_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bad symmetry-group JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("circuit") || !j.contains("groups"))
    throw std::runtime_error("symmetry-group JSON needs 'circuit' and 'groups'");
  SymmetryGroups g;
  g.circuit = j.at("circuit").get<std::string>();
  for (const auto& grp : j.at("groups")) {
    std::vector<std::string> ids;
    for (const auto& id : grp) ids.push_back(id.get<std::string>());
    if (ids.size() < 2) throw std::runtime_error("symmetry group with fewer than two members");
    g.groups.push_back(std::move(ids));
  }
  return g;
}

std::string groups_to_json(const SymmetryGroups& g) {
  nlohmann::json j;
  j["circuit"] = g.circuit;
  j["groups"] = g.groups;
  return j.dump(2) + "\n";
}

std::vector<PairSample> enumerate_valid_pairs(const CircuitGraph& g, const SymmetryGroups* groups,
                                              std::vector<std::string>* warnings) {
  std::map<std::string, int> group_of;
  if (groups) {
    for (size_t gi = 0; gi < groups->groups.size(); ++gi) {
      std::set<DeviceKind> kinds;
      for (const std::string& id : groups->groups[gi]) {
        int ni = g.node_index(id);
        if (ni < 0 || g.nodes[ni].device_index < 0)
          throw std::runtime_error("symmetry label references unknown device '" + id + "'");
        kinds.insert(g.nodes[ni].kind);
        if (!group_of.emplace(id, static_cast<int>(gi)).second)
          throw std::runtime_error("device '" + id + "' appears in two symmetry groups");
      }
      if (kinds.size() > 1)
        warn(warnings, "symmetry group " + std::to_string(gi) + " mixes device kinds");
    }
  }

  std::vector<PairSample> pairs;
  int nn = static_cast<int>(g.nodes.size());
  for (int a = 0; a < nn; ++a) {
    if (g.nodes[a].device_index < 0) continue;
    for (int b = a + 1; b < nn; ++b) {
      if (g.nodes[b].device_index < 0 || g.nodes[b].kind != g.nodes[a].kind) continue;
      auto ia = group_of.find(g.nodes[a].id), ib = group_of.find(g.nodes[b].id);
      int label = ia != group_of.end() && ib != group_of.end() && ia->second == ib->second ? 1 : -1;
      pairs.push_back({a, b, label});
    }
  }
  return pairs;
}

std::string graph_to_json(const CircuitGraph& g) {
  nlohmann::json j;
  j["circuit"] = g.name;
  j["nodes"] = nlohmann::json::array();
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    std::vector<double> f(g.node_features.row(i).begin(), g.node_features.row(i).end());
    j["nodes"].push_back({{"id", g.nodes[i].id}, {"kind", to_string(g.nodes[i].kind)}, {"feature", f}});
  }
  j["edges"] = nlohmann::json::array();
  for (size_t e = 0; e < g.edges.size(); ++e) {
    std::vector<double> f(g.edge_features.row(e).begin(), g.edge_features.row(e).end());
    j["edges"].push_back({{"src", g.edges[e].src}, {"dst", g.edges[e].dst}, {"feature", f}});
  }
  return j.dump(2) + "\n";
}

}  // namespace symx
