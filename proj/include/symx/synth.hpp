#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "symx/graph.hpp"
#include "symx/netlist.hpp"

namespace symx {

// One labeled circuit: the parsed netlist plus its symmetry groups.
struct CircuitSample {
  std::string name;
  Netlist netlist;
  SymmetryGroups groups;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  int circuits = 40;
  std::string profile = "mixed";  // ota | comparator | mirror_bank | bjt_reference | mixed
};

// Generates one circuit. The result depends only on (profile, seed, index),
// never on how many other circuits exist, so datasets of different sizes
// share a prefix.
CircuitSample synth_circuit(const std::string& profile, std::uint64_t seed, int index);

std::vector<CircuitSample> synth_dataset(const SynthConfig& cfg);

struct DatasetStats {
  int circuits = 0;
  int devices = 0;
  int valid_pairs = 0;
  int matched_pairs = 0;
};

DatasetStats dataset_stats(const std::vector<CircuitSample>& samples);

// Writes <name>.sp, <name>.groups.json per circuit plus manifest.json (and
// stats.json when stats are supplied) under dir, creating it if needed.
void write_dataset(const std::vector<CircuitSample>& samples, const std::string& dir,
                   const DatasetStats* stats = nullptr);

// Loads a dataset back through its manifest; relative paths resolve against
// the manifest's directory.
std::vector<CircuitSample> read_manifest(const std::string& manifest_path);

}  // namespace symx
