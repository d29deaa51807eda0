#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "symx/netlist.hpp"

namespace symx {

constexpr int kNodeFeatDim = 15;  // [0,9) kind one-hot, [9,11) size, [11,15) gate_conn
constexpr int kEdgeFeatDim = 5;   // gate, drain, source, passive-pin, other

// Per-kind min-max over device length and unit width, taken from the training
// split and stored with the model. Sizes are only compared within a kind.
struct NormStats {
  std::array<int, kDeviceKindCount> count{};
  std::array<double, kDeviceKindCount> l_min{}, l_max{}, w_min{}, w_max{};

  void accumulate(const Netlist& n);
  double norm_length(DeviceKind k, double l) const;
  double norm_width(DeviceKind k, double w) const;
  bool degenerate_length(DeviceKind k) const;
  bool degenerate_width(DeviceKind k) const;
};

struct GraphNode {
  std::string id;        // device id, or net name for IO nodes
  DeviceKind kind = DeviceKind::io;
  int device_index = -1;  // into Netlist::devices; -1 for IO nodes
  bool is_power = false;
  bool is_ground = false;
};

struct GraphEdge {
  int src = -1;
  int dst = -1;
};

// Directed graph over devices and IO ports. Edge (u→v) features describe v's
// pin roles on the nets u and v share; parallel nets OR-merge into one edge.
// Power/ground nets connect members to the rail node only; every other net is
// expanded into a full clique. Node order is canonical: devices sorted by id,
// then IO nodes sorted by name, so declaration order never matters.
struct CircuitGraph {
  std::string name;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;             // sorted by (src, dst)
  Eigen::MatrixXd node_features;            // N×15
  Eigen::MatrixXd edge_features;            // E×5
  std::vector<std::vector<int>> out_edges;  // per node, edge ids with src == node

  int node_index(const std::string& id) const;  // -1 if absent
};

CircuitGraph build_graph(const Netlist& n, const NormStats& stats, bool use_gate_feature = true,
                         std::vector<std::string>* warnings = nullptr);

// The two feature encoders behind build_graph, callable on a prebuilt node set.
std::vector<GraphNode> graph_nodes(const Netlist& n);
Eigen::MatrixXd encode_node_features(const Netlist& n, const std::vector<GraphNode>& nodes,
                                     const NormStats& stats, bool use_gate_feature,
                                     std::vector<std::string>* warnings);

struct SymmetryGroups {
  std::string circuit;
  std::vector<std::vector<std::string>> groups;
};

SymmetryGroups groups_from_json(const std::string& text);
std::string groups_to_json(const SymmetryGroups& g);

struct PairSample {
  int a = -1;      // node indices, a < b
  int b = -1;
  int label = -1;  // +1 same group, else -1
};

// All unordered same-kind device pairs (IO nodes excluded), labeled from the
// groups; pass nullptr when no ground truth exists (labels default to -1).
std::vector<PairSample> enumerate_valid_pairs(const CircuitGraph& g, const SymmetryGroups* groups,
                                              std::vector<std::string>* warnings = nullptr);

std::string graph_to_json(const CircuitGraph& g);

}  // namespace symx
