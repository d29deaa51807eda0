#include "symx/postprocess.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace symx {

namespace {

constexpr double kPositionTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Multi-source Dijkstra over the bi-directional edge list.
std::vector<double> shortest_from(const CircuitGraph& g, const std::vector<int>& sources) {
  std::vector<double> dist(g.nodes.size(), kInf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (int s : sources) {
    dist[s] = 0.0;
    heap.push({0.0, s});
  }
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (int e : g.out_edges[u]) {
      int v = g.edges[e].dst;
      double nd = d + edge_weight(g.nodes[u].kind, g.nodes[v].kind);
      if (nd < dist[v]) {
        dist[v] = nd;
        heap.push({nd, v});
      }
    }
  }
  return dist;
}

}  // namespace

double edge_weight(DeviceKind a, DeviceKind b) {
  int passives = (is_passive(a) ? 1 : 0) + (is_passive(b) ? 1 : 0);
  return passives == 2 ? 0.0 : passives == 1 ? 0.5 : 1.0;
}

std::vector<double> device_positions(const CircuitGraph& g, std::vector<std::string>* warnings) {
  std::vector<int> power, ground;
  bool any_pmos = false, any_nmos = false;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].is_power) power.push_back(static_cast<int>(i));
    if (g.nodes[i].is_ground) ground.push_back(static_cast<int>(i));
    any_pmos |= g.nodes[i].kind == DeviceKind::pmos;
    any_nmos |= g.nodes[i].kind == DeviceKind::nmos;
  }
  if (any_pmos && power.empty())
    throw std::runtime_error("positions: PMOS devices present but no power net identified");
  if (any_nmos && ground.empty())
    throw std::runtime_error("positions: NMOS devices present but no ground net identified");

  std::vector<double> from_power = power.empty() ? std::vector<double>() : shortest_from(g, power);
  std::vector<double> from_ground = ground.empty() ? std::vector<double>() : shortest_from(g, ground);

  std::vector<double> pos(g.nodes.size(), 0.0);
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    DeviceKind k = g.nodes[i].kind;
    if (k == DeviceKind::pmos)
      pos[i] = from_power[i];
    else if (k == DeviceKind::nmos)
      pos[i] = from_ground[i];
    if (std::isinf(pos[i]) && warnings)
      warnings->push_back("device '" + g.nodes[i].id + "' cannot reach its supply rail; position is +inf");
  }
  return pos;
}

namespace {

bool size_equal(double a, double b, bool relaxed) {
  if (!relaxed) return a == b;
  return std::abs(a - b) <= 1e-6 * std::max({std::abs(a), std::abs(b), 1.0});
}

nlohmann::json size_json(const Device& d) {
  return {{"model", d.model}, {"l", d.length}, {"unit_w", d.unit_width()}, {"nf", d.fingers}};
}

double json_safe(double v) { return std::isfinite(v) ? v : -1.0; }

}  // namespace

FilterResult apply_rules(const std::vector<PairSample>& predicted, const CircuitGraph& g,
                         const Netlist& n, const std::vector<double>& positions,
                         const RuleFlags& flags) {
  FilterResult out;
  for (const PairSample& p : predicted) {
    const GraphNode& na = g.nodes[p.a];
    const GraphNode& nb = g.nodes[p.b];
    if (na.device_index < 0 || nb.device_index < 0)
      throw std::invalid_argument("post-processing expects device pairs");
    const Device& da = n.devices[na.device_index];
    const Device& db = n.devices[nb.device_index];

    if (flags.position) {
      double pa = positions[p.a], pb = positions[p.b];
      // Two unreachable devices compare as unequal: inf−inf is NaN, which
      // fails the tolerance test and removes the pair.
      if (!(std::abs(pa - pb) <= kPositionTol)) {
        out.removed.push_back({da.id, db.id, "position",
                               nlohmann::json{{"a", json_safe(pa)}, {"b", json_safe(pb)}}.dump()});
        continue;
      }
    }
    if (flags.size) {
      bool same = da.model == db.model && da.fingers == db.fingers &&
                  size_equal(da.length, db.length, flags.relaxed_size) &&
                  size_equal(da.unit_width(), db.unit_width(), flags.relaxed_size);
      if (!same) {
        out.removed.push_back(
            {da.id, db.id, "size", nlohmann::json{{"a", size_json(da)}, {"b", size_json(db)}}.dump()});
        continue;
      }
    }
    if (flags.dummy && (da.is_dummy || db.is_dummy)) {
      out.removed.push_back(
          {da.id, db.id, "dummy",
           nlohmann::json{{"a", da.is_dummy}, {"b", db.is_dummy}}.dump()});
      continue;
    }
    out.kept.push_back(p);
  }
  return out;
}

std::string removals_to_jsonl(const std::vector<Removal>& removed) {
  std::string out;
  for (const Removal& r : removed) {
    nlohmann::json line = {{"pair", {r.a, r.b}}, {"rule", r.rule},
                           {"values", nlohmann::json::parse(r.values_json)}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace symx
