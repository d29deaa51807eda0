#pragma once

#include <string>
#include <vector>

#include "symx/graph.hpp"

namespace symx {

// Hop weight between two node kinds: passive devices (R/C/L) soften a hop to
// 0.5 per passive endpoint; IO, BJT and diode nodes count as non-passive.
double edge_weight(DeviceKind a, DeviceKind b);

// Weighted shortest-path depth of every node: PMOS from the nearest power
// rail, NMOS from the nearest ground rail, everything else 0. Unreachable MOS
// devices get +inf plus a warning. Throws when a polarity has devices but no
// rail of its kind exists.
std::vector<double> device_positions(const CircuitGraph& g,
                                     std::vector<std::string>* warnings = nullptr);

struct RuleFlags {
  bool position = true;
  bool size = true;
  bool dummy = true;
  bool relaxed_size = false;  // relative 1e-6 size compare instead of exact
};

struct Removal {
  std::string a, b;
  std::string rule;         // "position" | "size" | "dummy"
  std::string values_json;  // rule-specific values, one JSON object
};

struct FilterResult {
  std::vector<PairSample> kept;
  std::vector<Removal> removed;
};

// Filters predicted-positive pairs. Never adds a pair; rules check in the
// fixed order position, size, dummy, and the log records the first rule that
// fires for each removed pair.
FilterResult apply_rules(const std::vector<PairSample>& predicted, const CircuitGraph& g,
                         const Netlist& n, const std::vector<double>& positions,
                         const RuleFlags& flags = {});

std::string removals_to_jsonl(const std::vector<Removal>& removed);

}  // namespace symx
