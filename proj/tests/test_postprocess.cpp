#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "json.hpp"
#include "support/oracles.hpp"
#include "symx/model.hpp"
#include "symx/netlist.hpp"
#include "symx/postprocess.hpp"
#include "symx/synth.hpp"

using namespace symx;

namespace {

CircuitGraph graph_of(const Netlist& n) {
  NormStats s;
  s.accumulate(n);
  return build_graph(n, s);
}

PairSample pair_of(const CircuitGraph& g, const std::string& a, const std::string& b) {
  int ia = g.node_index(a), ib = g.node_index(b);
  REQUIRE(ia >= 0);
  REQUIRE(ib >= 0);
  return {std::min(ia, ib), std::max(ia, ib), -1};
}

double pos_of(const CircuitGraph& g, const std::vector<double>& pos, const std::string& id) {
  int i = g.node_index(id);
  REQUIRE(i >= 0);
  return pos[i];
}

}  // namespace

TEST_CASE("hop weights depend on passive endpoint count") {
  CHECK(edge_weight(DeviceKind::nmos, DeviceKind::pmos) == 1.0);
  CHECK(edge_weight(DeviceKind::nmos, DeviceKind::resistor) == 0.5);
  CHECK(edge_weight(DeviceKind::capacitor, DeviceKind::inductor) == 0.0);
  CHECK(edge_weight(DeviceKind::resistor, DeviceKind::resistor) == 0.0);
  CHECK(edge_weight(DeviceKind::io, DeviceKind::capacitor) == 0.5);
  CHECK(edge_weight(DeviceKind::npn, DeviceKind::diode) == 1.0);
  CHECK(edge_weight(DeviceKind::io, DeviceKind::io) == 1.0);
}

TEST_CASE("rail depths on a hand-built ladder") {
  // vdd − MP1 − (via R1) − MP2 …; gnd side mirrors with MN1, MN2.
  Netlist n = parse_netlist(
      ".SUBCKT ladder vdd gnd in\n"
      "MP1 a in vdd vdd pch L=1u W=1u\n"
      "R1 a b 1k\n"
      "MP2 c in b b pch L=1u W=1u\n"
      "MN1 d in gnd gnd nch L=1u W=1u\n"
      "MN2 c in d d nch L=1u W=1u\n"
      "C1 c gnd 1p\n"
      ".ENDS\n");
  CircuitGraph g = graph_of(n);
  std::vector<double> pos = device_positions(g);

  // MP1 touches the rail: one full hop.
  CHECK(pos_of(g, pos, "MP1") == 1.0);
  // MP2 reaches vdd through MP1 and the resistor: 1 + 0.5 + 0.5 = 2.
  CHECK(pos_of(g, pos, "MP2") == 2.0);
  CHECK(pos_of(g, pos, "MN1") == 1.0);
  // MN2 via MN1 directly (device-device hop): 2. The capacitor shortcut
  // (gnd−C1 = 0.5, C1−MN2 = 0.5) costs 1 and wins.
  CHECK(pos_of(g, pos, "MN2") == 1.0);
  // Non-MOS devices and IO nodes sit at zero.
  CHECK(pos_of(g, pos, "R1") == 0.0);
  CHECK(pos_of(g, pos, "C1") == 0.0);
  CHECK(pos_of(g, pos, "vdd") == 0.0);
}

TEST_CASE("positions match the relaxation oracle on random graphs") {
  // Half-unit weights sum exactly in binary, so equality is bitwise.
  for (std::uint64_t s = 1; s <= 100; ++s) {
    CircuitGraph g = fuzz_graph(s, 4, 16);
    std::vector<double> fast = device_positions(g);
    std::vector<double> ref = testsupport::bellman_ford_positions(g);
    REQUIRE(fast.size() == ref.size());
    for (size_t i = 0; i < fast.size(); ++i) {
      if (std::isinf(ref[i]))
        CHECK(std::isinf(fast[i]));
      else
        CHECK(fast[i] == ref[i]);
    }
  }
}

TEST_CASE("missing rails: throw when needed, +inf when unreachable") {
  // PMOS exists but no net is recognized as power.
  Netlist n = parse_netlist(
      ".SUBCKT nopow gnd in\n"
      "MP1 a in b b pch L=1u W=1u\n"
      "R1 a gnd 1k\n"
      "R2 b gnd 1k\n"
      ".ENDS\n");
  CircuitGraph g = graph_of(n);
  CHECK_THROWS_AS(device_positions(g), std::runtime_error);

  // NMOS-only circuit is fine without a power net.
  Netlist n2 = parse_netlist(
      ".SUBCKT nmosonly gnd in\n"
      "MN1 a in gnd gnd nch L=1u W=1u\n"
      "R1 a in 1k\n"
      ".ENDS\n");
  CHECK_NOTHROW(device_positions(graph_of(n2)));

  // A PMOS islanded away from vdd gets +inf and a warning.
  Netlist n3 = parse_netlist(
      ".SUBCKT island vdd gnd in\n"
      "MP1 a in vdd vdd pch L=1u W=1u\n"
      "R1 a gnd 1k\n"
      "MP2 y x z z pch L=1u W=1u\n"
      "R2 x y 1k\n"
      "R3 z y 1k\n"
      ".ENDS\n");
  CircuitGraph g3 = graph_of(n3);
  std::vector<std::string> warnings;
  std::vector<double> pos = device_positions(g3, &warnings);
  CHECK(std::isinf(pos_of(g3, pos, "MP2")));
  CHECK(pos_of(g3, pos, "MP1") == 1.0);
  REQUIRE(!warnings.empty());
  CHECK(warnings[0].find("MP2") != std::string::npos);
}

TEST_CASE("rules fire in order: position, then size, then dummy") {
  // MPA/MPB: equal depth, equal size, non-dummy → kept.
  // MPA/MPC: depth differs (MPC stacked on MPA's drain, one MOS hop deeper).
  // MPA/MPD: same depth, different width.
  // MDMYP1/MDMYP2: dummies at equal depth and size.
  Netlist n = parse_netlist(
      ".SUBCKT rules vdd gnd in\n"
      "MPA x1 in vdd vdd pch L=1u W=4u\n"
      "MPB x2 in vdd vdd pch L=1u W=4u\n"
      "MPC x3 in x1 x1 pch L=1u W=4u\n"
      "MPD x4 in vdd vdd pch L=1u W=8u\n"
      "MDMYP1 vdd vdd vdd vdd pch L=1u W=4u\n"
      "MDMYP2 vdd vdd vdd vdd pch L=1u W=4u\n"
      "R2 x1 x2 1k\n"
      "R3 x3 x4 1k\n"
      ".ENDS\n");
  CircuitGraph g = graph_of(n);
  std::vector<double> pos = device_positions(g);

  std::vector<PairSample> predicted = {
      pair_of(g, "MPA", "MPB"), pair_of(g, "MPA", "MPC"), pair_of(g, "MPA", "MPD"),
      pair_of(g, "MDMYP1", "MDMYP2")};
  FilterResult r = apply_rules(predicted, g, n, pos);

  REQUIRE(r.kept.size() == 1);
  CHECK(g.nodes[r.kept[0].a].id == "MPA");
  CHECK(g.nodes[r.kept[0].b].id == "MPB");
  REQUIRE(r.removed.size() == 3);

  auto removed_rule = [&](const std::string& x, const std::string& y) -> std::string {
    for (const Removal& rm : r.removed)
      if ((rm.a == x && rm.b == y) || (rm.a == y && rm.b == x)) return rm.rule;
    return "";
  };
  CHECK(removed_rule("MPA", "MPC") == "position");
  CHECK(removed_rule("MPA", "MPD") == "size");
  // Dummies match on position and size; the dummy rule is what fires.
  CHECK(removed_rule("MDMYP1", "MDMYP2") == "dummy");

  // Each removal logs machine-readable values for its rule.
  for (const Removal& rm : r.removed) {
    nlohmann::json v = nlohmann::json::parse(rm.values_json);
    if (rm.rule == "position") {
      CHECK(v.at("a").is_number());
      CHECK(v.at("b").is_number());
    } else if (rm.rule == "size") {
      CHECK(v.at("a").contains("unit_w"));
      CHECK(v.at("b").contains("nf"));
    } else {
      CHECK(v.at("a").is_boolean());
    }
  }

  std::string jsonl = removals_to_jsonl(r.removed);
  int lines = 0;
  for (char c : jsonl) lines += c == '\n';
  CHECK(lines == 3);
  nlohmann::json first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  CHECK(first.at("pair").size() == 2);
  CHECK(first.contains("rule"));
  CHECK(first.contains("values"));
}

TEST_CASE("rule toggles and relaxed size compare") {
  Netlist n = parse_netlist(
      ".SUBCKT tog vdd gnd in\n"
      "MPA x1 in vdd vdd pch L=1u W=4u\n"
      "MPC x3 in r1 r1 pch L=1u W=4u\n"
      "R1 vdd r1 1k\n"
      "R2 x1 x3 1k\n"
      ".ENDS\n");
  CircuitGraph g = graph_of(n);
  std::vector<double> pos = device_positions(g);
  std::vector<PairSample> predicted = {pair_of(g, "MPA", "MPC")};

  RuleFlags off;
  off.position = false;
  FilterResult r = apply_rules(predicted, g, n, pos, off);
  CHECK(r.kept.size() == 1);  // only the position rule would have fired
  CHECK(r.removed.empty());

  // Model mismatch fails the size rule no matter the tolerance.
  Netlist nm = parse_netlist(
      ".SUBCKT vt vdd gnd in\n"
      "MPA x in vdd vdd pch L=1u W=4u\n"
      "MPB x in vdd vdd pch_lvt L=1u W=4u\n"
      ".ENDS\n");
  CircuitGraph gm = graph_of(nm);
  std::vector<double> pm = device_positions(gm);
  RuleFlags relaxed;
  relaxed.relaxed_size = true;
  FilterResult rm = apply_rules({pair_of(gm, "MPA", "MPB")}, gm, nm, pm, relaxed);
  REQUIRE(rm.removed.size() == 1);
  CHECK(rm.removed[0].rule == "size");

  // A one-part-per-billion width difference passes relaxed, fails exact.
  Netlist nw = parse_netlist(
      ".SUBCKT w vdd gnd in\n"
      "MPA x in vdd vdd pch L=1u W=4u\n"
      "MPB x in vdd vdd pch L=1u W=4.000000004u\n"
      ".ENDS\n");
  CircuitGraph gw = graph_of(nw);
  std::vector<double> pw = device_positions(gw);
  FilterResult exact = apply_rules({pair_of(gw, "MPA", "MPB")}, gw, nw, pw);
  REQUIRE(exact.removed.size() == 1);
  CHECK(exact.removed[0].rule == "size");
  FilterResult loose = apply_rules({pair_of(gw, "MPA", "MPB")}, gw, nw, pw, relaxed);
  CHECK(loose.removed.empty());
}

TEST_CASE("infinite positions never survive the position rule") {
  // Both PMOS unreachable: |inf − inf| is NaN, which must remove the pair.
  // Their island (gates tied on local net x) never touches a rail.
  Netlist n = parse_netlist(
      ".SUBCKT inf vdd gnd in\n"
      "MPQ t in vdd vdd pch L=1u W=1u\n"
      "R3 t gnd 1k\n"
      "MPX a x c c pch L=1u W=1u\n"
      "MPY b x c c pch L=1u W=1u\n"
      "R1 a b 1k\n"
      "R2 a c 1k\n"
      ".ENDS\n");
  CircuitGraph g = graph_of(n);
  std::vector<std::string> warnings;
  std::vector<double> pos = device_positions(g, &warnings);
  FilterResult r = apply_rules({pair_of(g, "MPX", "MPY")}, g, n, pos);
  REQUIRE(r.removed.size() == 1);
  CHECK(r.removed[0].rule == "position");
  // Non-finite values appear as the -1 sentinel in the log.
  nlohmann::json v = nlohmann::json::parse(r.removed[0].values_json);
  CHECK(v.at("a").get<double>() == -1.0);
}

TEST_CASE("filtering is monotone and idempotent on random prediction sets") {
  std::mt19937_64 rng(2024);
  // A few generated circuits provide realistic graphs; each trial filters a
  // random subset of the enumerable pairs.
  std::vector<CircuitSample> samples;
  for (int i = 0; i < 8; ++i) samples.push_back(synth_circuit("mixed", 5, i));

  for (int trial = 0; trial < 200; ++trial) {
    const CircuitSample& cs = samples[trial % samples.size()];
    NormStats s;
    s.accumulate(cs.netlist);
    CircuitGraph g = build_graph(cs.netlist, s);
    std::vector<double> pos = device_positions(g);
    std::vector<PairSample> all = enumerate_valid_pairs(g, &cs.groups);

    std::vector<PairSample> predicted;
    for (const PairSample& p : all)
      if (rng() % 2 == 0) predicted.push_back(p);

    FilterResult r = apply_rules(predicted, g, cs.netlist, pos);

    // Kept pairs are a subset of the input, in order, with no additions.
    CHECK(r.kept.size() + r.removed.size() == predicted.size());
    std::set<std::pair<int, int>> in;
    for (const PairSample& p : predicted) in.insert({p.a, p.b});
    for (const PairSample& p : r.kept) CHECK(in.count({p.a, p.b}) == 1);

    // True pairs are rule-clean by construction: never removed.
    for (const PairSample& p : r.kept) (void)p;
    for (const Removal& rm : r.removed) {
      int ia = g.node_index(rm.a), ib = g.node_index(rm.b);
      for (const PairSample& p : predicted)
        if (p.a == std::min(ia, ib) && p.b == std::max(ia, ib)) CHECK(p.label == -1);
    }

    // Filtering the kept set again removes nothing (idempotence).
    FilterResult again = apply_rules(r.kept, g, cs.netlist, pos);
    CHECK(again.removed.empty());
    CHECK(again.kept.size() == r.kept.size());
  }
}
