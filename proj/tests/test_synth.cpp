#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "support/testutil.hpp"
#include "symx/graph.hpp"
#include "symx/netlist.hpp"
#include "symx/postprocess.hpp"
#include "symx/synth.hpp"

using namespace symx;

namespace {

const Device& device_of(const Netlist& n, const std::string& id) {
  for (const Device& d : n.devices)
    if (d.id == id) return d;
  REQUIRE(false);
  static Device dummy;
  return dummy;
}

}  // namespace

TEST_CASE("generation is deterministic and index-stable") {
  SynthConfig cfg;
  cfg.seed = 9;
  cfg.circuits = 6;
  std::vector<CircuitSample> a = synth_dataset(cfg);
  std::vector<CircuitSample> b = synth_dataset(cfg);
  REQUIRE(a.size() == 6);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(emit_netlist(a[i].netlist) == emit_netlist(b[i].netlist));
    CHECK(groups_to_json(a[i].groups) == groups_to_json(b[i].groups));
  }

  // A longer run shares its prefix with a shorter one (per-index seeding).
  cfg.circuits = 9;
  std::vector<CircuitSample> c = synth_dataset(cfg);
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(emit_netlist(c[i].netlist) == emit_netlist(a[i].netlist));

  // A different seed changes the circuits.
  CHECK(emit_netlist(synth_circuit("mixed", 10, 0).netlist) !=
        emit_netlist(synth_circuit("mixed", 9, 0).netlist));
}

TEST_CASE("every profile emits parseable, round-trippable circuits") {
  for (const char* profile : {"ota", "comparator", "mirror_bank", "bjt_reference", "mixed"}) {
    for (int i = 0; i < 3; ++i) {
      CircuitSample s = synth_circuit(profile, 31, i);
      CHECK(s.name.find('_') != std::string::npos);
      std::string text = emit_netlist(s.netlist);
      Netlist back = parse_netlist(text);
      CHECK(emit_netlist(back) == text);  // fixpoint after one emit
      CHECK(back.devices.size() == s.netlist.devices.size());
      CHECK(!s.groups.groups.empty());
    }
  }
  CHECK_THROWS_AS(synth_circuit("no_such_profile", 1, 0), std::invalid_argument);
}

TEST_CASE("labeled groups are rule-clean") {
  // Post-processing must never delete a true pair: group members share model,
  // geometry and rail depth, and are never dummies.
  for (int i = 0; i < 12; ++i) {
    CircuitSample s = synth_circuit("mixed", 1, i);
    NormStats st;
    st.accumulate(s.netlist);
    CircuitGraph g = build_graph(s.netlist, st);
    std::vector<double> pos = device_positions(g);

    for (const auto& grp : s.groups.groups) {
      REQUIRE(grp.size() >= 2);
      const Device& first = device_of(s.netlist, grp[0]);
      double depth0 = pos[g.node_index(grp[0])];
      for (const std::string& id : grp) {
        const Device& d = device_of(s.netlist, id);
        CHECK(!d.is_dummy);
        CHECK(d.kind == first.kind);
        CHECK(d.model == first.model);
        CHECK(d.length == first.length);
        CHECK(d.unit_width() == first.unit_width());
        CHECK(d.fingers == first.fingers);
        CHECK(pos[g.node_index(id)] == depth0);
      }
    }
  }
}

TEST_CASE("every circuit carries removable decoys") {
  // The dummy trap gives post-processing guaranteed work on each circuit.
  for (int i = 0; i < 12; ++i) {
    CircuitSample s = synth_circuit("mixed", 1, i);
    int dummies = 0;
    for (const Device& d : s.netlist.devices) dummies += d.is_dummy;
    CHECK(dummies >= 2);
  }
}

TEST_CASE("dataset statistics add up") {
  SynthConfig cfg;
  cfg.seed = 1;
  cfg.circuits = 10;
  std::vector<CircuitSample> ds = synth_dataset(cfg);
  DatasetStats st = dataset_stats(ds);
  CHECK(st.circuits == 10);

  long devices = 0;
  for (const CircuitSample& s : ds) devices += static_cast<long>(s.netlist.devices.size());
  CHECK(st.devices == devices);

  long pairs = 0, matched = 0;
  for (const CircuitSample& s : ds) {
    NormStats norm;
    norm.accumulate(s.netlist);
    CircuitGraph g = build_graph(s.netlist, norm);
    for (const PairSample& p : enumerate_valid_pairs(g, &s.groups)) {
      ++pairs;
      matched += p.label == 1;
    }
  }
  CHECK(st.valid_pairs == pairs);
  CHECK(st.matched_pairs == matched);

  // The matched fraction stays in the band the training target was tuned for.
  double ratio = static_cast<double>(st.matched_pairs) / static_cast<double>(st.valid_pairs);
  CHECK(ratio > 0.05);
  CHECK(ratio < 0.35);
}

TEST_CASE("dataset writes and reads back identically") {
  testsupport::TempDir dir("synthio");
  SynthConfig cfg;
  cfg.seed = 4;
  cfg.circuits = 5;
  std::vector<CircuitSample> ds = synth_dataset(cfg);
  DatasetStats st = dataset_stats(ds);
  write_dataset(ds, dir.path(), &st);

  namespace fs = std::filesystem;
  CHECK(fs::exists(dir.file("manifest.json")));
  CHECK(fs::exists(dir.file("stats.json")));
  for (const CircuitSample& s : ds) {
    CHECK(fs::exists(dir.file(s.name + ".sp")));
    CHECK(fs::exists(dir.file(s.name + ".groups.json")));
  }

  std::vector<CircuitSample> back = read_manifest(dir.file("manifest.json"));
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].name == ds[i].name);
    CHECK(emit_netlist(back[i].netlist) == emit_netlist(ds[i].netlist));
    CHECK(groups_to_json(back[i].groups) == groups_to_json(ds[i].groups));
  }

  CHECK_THROWS_AS(read_manifest(dir.file("nope/manifest.json")), std::runtime_error);
}
