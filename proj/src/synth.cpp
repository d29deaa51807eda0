#include "symx/synth.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace symx {

namespace {

// -------------------------------------------------------------------------
// Randomness

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}

  int below(int n) { return std::uniform_int_distribution<int>(0, n - 1)(eng); }
  bool chance(double p) { return std::bernoulli_distribution(p)(eng); }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[below(static_cast<int>(v.size()))];
  }
  // Uniform index into [0, n) that avoids one slot.
  int index_except(int n, int avoid) {
    int i = below(n - 1);
    return i >= avoid ? i + 1 : i;
  }
};

// -------------------------------------------------------------------------
// Component grids

const std::vector<double> kMosLengths = {1.8e-7, 2.4e-7, 3e-7, 4e-7, 5e-7, 7e-7, 9e-7, 1.2e-6};
const std::vector<double> kMosUnitWidths = {6e-7,   9e-7,   1.2e-6, 1.8e-6,
                                            2.4e-6, 3.6e-6, 4.8e-6, 7.2e-6};
const std::vector<int> kFingerChoices = {1, 2, 4};
const std::vector<std::string> kNmosModels = {"nch", "nch_lvt", "nch_25"};
const std::vector<std::string> kPmosModels = {"pch", "pch_lvt", "pch_25"};
const std::vector<double> kResistorValues = {1e3, 2.2e3, 4.7e3, 1e4, 2.2e4, 4.7e4, 1e5};
const std::vector<double> kCapacitorValues = {5e-13, 1e-12, 2e-12, 5e-12, 1e-11};
const std::vector<double> kInductorValues = {1e-9, 2.2e-9, 4.7e-9, 1e-8};

// MOS geometry as grid indices so "same size" and "differs in one knob" are
// exact by construction.
struct MosSize {
  std::string model;
  int li = 0, wi = 0, nfi = 0;

  double length() const { return kMosLengths[li]; }
  double unit_width() const { return kMosUnitWidths[wi]; }
  int fingers() const { return kFingerChoices[nfi]; }
};

MosSize random_mos(Rng& rng, const std::vector<std::string>& models) {
  return {rng.pick(models), rng.below(static_cast<int>(kMosLengths.size())),
          rng.below(static_cast<int>(kMosUnitWidths.size())),
          rng.below(static_cast<int>(kFingerChoices.size()))};
}

// Same model, visibly different geometry.
MosSize resized(Rng& rng, const MosSize& base) {
  MosSize out = base;
  out.wi = rng.index_except(static_cast<int>(kMosUnitWidths.size()), base.wi);
  return out;
}

// Same geometry, different threshold flavor.
MosSize revoltaged(Rng& rng, const MosSize& base, const std::vector<std::string>& models) {
  MosSize out = base;
  int cur = 0;
  for (int i = 0; i < static_cast<int>(models.size()); ++i)
    if (models[i] == base.model) cur = i;
  out.model = models[rng.index_except(static_cast<int>(models.size()), cur)];
  return out;
}

double resistor_except(Rng& rng, double avoid) {
  int cur = 0;
  for (int i = 0; i < static_cast<int>(kResistorValues.size()); ++i)
    if (kResistorValues[i] == avoid) cur = i;
  return kResistorValues[rng.index_except(static_cast<int>(kResistorValues.size()), cur)];
}

double capacitor_except(Rng& rng, double avoid) {
  int cur = 0;
  for (int i = 0; i < static_cast<int>(kCapacitorValues.size()); ++i)
    if (kCapacitorValues[i] == avoid) cur = i;
  return kCapacitorValues[rng.index_except(static_cast<int>(kCapacitorValues.size()), cur)];
}

// -------------------------------------------------------------------------
// Card assembly

struct Builder {
  std::vector<std::string> ports;
  std::ostringstream cards;
  std::vector<std::vector<std::string>> groups;

  void port(const std::string& p) { ports.push_back(p); }

  void mos(const std::string& id, const std::string& d, const std::string& g,
           const std::string& s, const std::string& b, const MosSize& sz) {
    cards << id << ' ' << d << ' ' << g << ' ' << s << ' ' << b << ' ' << sz.model
          << " L=" << format_value(sz.length()) << " W=" << format_value(sz.unit_width() * sz.fingers())
          << " nf=" << sz.fingers() << '\n';
  }

  void bjt(const std::string& id, const std::string& c, const std::string& b,
           const std::string& e, const std::string& model) {
    cards << id << ' ' << c << ' ' << b << ' ' << e << ' ' << model << '\n';
  }

  void diode(const std::string& id, const std::string& a, const std::string& c) {
    cards << id << ' ' << a << ' ' << c << " dstd" << '\n';
  }

  void passive(const std::string& id, const std::string& a, const std::string& b, double value) {
    cards << id << ' ' << a << ' ' << b << ' ' << format_value(value) << '\n';
  }

  void group(std::vector<std::string> ids) { groups.push_back(std::move(ids)); }

  CircuitSample finish(const std::string& name) const {
    std::ostringstream text;
    text << ".SUBCKT " << name;
    for (const std::string& p : ports) text << ' ' << p;
    text << '\n' << cards.str() << ".ENDS\n";

    CircuitSample out;
    out.name = name;
    out.netlist = parse_netlist(text.str());
    out.groups.circuit = name;
    out.groups.groups = groups;
    for (const auto& grp : groups)
      for (const std::string& id : grp) {
        bool found = false;
        for (const Device& d : out.netlist.devices) found |= d.id == id;
        if (!found) throw std::logic_error("generator produced group member '" + id + "' without a device");
      }
    return out;
  }
};

// -------------------------------------------------------------------------
// Shared motifs

// Identical tied-off spares; the symmetry they exhibit is accidental, so they
// never join a group.
void add_dummies(Builder& b, Rng& rng, bool pmos_flavor) {
  const std::string rail = pmos_flavor ? "vdd" : "vss";
  const std::string stem = pmos_flavor ? "MDMYP" : "MDMYN";
  MosSize sz = random_mos(rng, pmos_flavor ? kPmosModels : kNmosModels);
  int count = rng.chance(0.25) ? 3 : 2;
  for (int i = 1; i <= count; ++i)
    b.mos(stem + std::to_string(i), rail, rail, rail, rail, sz);
}

// Two NMOS with identical geometry but different threshold flavors, loaded by
// a matched resistor pair and biased from a shared diode. The resistor pair
// is matched on purpose; the transistor pair only looks matched.
void add_vth_trap(Builder& b, Rng& rng) {
  double rt = rng.pick(kResistorValues);
  double ra = resistor_except(rng, rt);
  MosSize twin = random_mos(rng, kNmosModels);
  MosSize ref = resized(rng, twin);
  b.passive("RT1", "vdd", "tb", rt);
  b.mos("MTR1", "tb", "tb", "vss", "vss", ref);
  b.mos("MT1", "ta1", "tb", "vss", "vss", twin);
  b.mos("MT2", "ta2", "tb", "vss", "vss", revoltaged(rng, twin, kNmosModels));
  b.passive("RA1", "vdd", "ta1", ra);
  b.passive("RA2", "vdd", "ta2", ra);
  b.group({"RA1", "RA2"});
}

// -------------------------------------------------------------------------
// Profiles

// Two-stage Miller amplifier: NMOS input pair, mirrored PMOS loads, bias
// mirror, compensation network.
void build_ota(Builder& b, Rng& rng) {
  for (const char* p : {"vdd", "vss", "inp", "inn", "out", "ibias"}) b.port(p);

  MosSize diff = random_mos(rng, kNmosModels);
  MosSize bias = rng.chance(0.30) ? diff : random_mos(rng, kNmosModels);
  MosSize load = random_mos(rng, kPmosModels);
  MosSize stage2 = rng.chance(0.35) ? load : resized(rng, load);
  bool sink_matched = rng.chance(0.5);
  MosSize sink = sink_matched ? bias : resized(rng, bias);

  b.mos("MB0", "ibias", "ibias", "vss", "vss", bias);
  b.mos("MB1", "tail", "ibias", "vss", "vss", bias);
  b.mos("MN1", "n1", "inp", "tail", "vss", diff);
  b.mos("MN2", "n2", "inn", "tail", "vss", diff);
  b.mos("ML1", "n1", "n1", "vdd", "vdd", load);
  b.mos("ML2", "n2", "n1", "vdd", "vdd", load);
  b.mos("MP5", "out", "n2", "vdd", "vdd", stage2);
  b.mos("MN6", "out", "ibias", "vss", "vss", sink);
  if (sink_matched)
    b.group({"MB0", "MB1", "MN6"});
  else
    b.group({"MB0", "MB1"});
  b.group({"MN1", "MN2"});
  b.group({"ML1", "ML2"});

  double cc = rng.pick(kCapacitorValues);
  if (rng.chance(0.5)) {
    b.passive("RZ1", "n2", "nz", rng.pick(kResistorValues));
    b.passive("CC1", "nz", "out", cc);
  } else {
    b.passive("CC1", "n2", "out", cc);
  }
  b.passive("CL1", "out", "vss", capacitor_except(rng, cc));

  if (rng.chance(0.40)) add_vth_trap(b, rng);
  add_dummies(b, rng, false);
}

// Clocked latch comparator: input pair under a clocked tail, cross-coupled
// NMOS/PMOS core, reset switches.
void build_comparator(Builder& b, Rng& rng) {
  for (const char* p : {"vdd", "vss", "clk", "inp", "inn", "outp", "outn"}) b.port(p);

  MosSize in = random_mos(rng, kNmosModels);
  MosSize tail = rng.chance(0.25) ? in : random_mos(rng, kNmosModels);
  MosSize xn = random_mos(rng, kNmosModels);
  MosSize xp = random_mos(rng, kPmosModels);
  MosSize rst = rng.chance(0.25) ? xp : random_mos(rng, kPmosModels);

  b.mos("MTAIL1", "tc", "clk", "vss", "vss", tail);
  b.mos("MIN1", "di", "inp", "tc", "vss", in);
  b.mos("MIN2", "dj", "inn", "tc", "vss", in);
  b.mos("MXN1", "outp", "outn", "di", "vss", xn);
  b.mos("MXN2", "outn", "outp", "dj", "vss", xn);
  b.mos("MXP1", "outp", "outn", "vdd", "vdd", xp);
  b.mos("MXP2", "outn", "outp", "vdd", "vdd", xp);
  b.mos("MRST1", "outp", "clk", "vdd", "vdd", rst);
  b.mos("MRST2", "outn", "clk", "vdd", "vdd", rst);
  b.group({"MIN1", "MIN2"});
  b.group({"MXN1", "MXN2"});
  b.group({"MXP1", "MXP2"});
  b.group({"MRST1", "MRST2"});

  double cl = rng.pick(kCapacitorValues);
  b.passive("CLO1", "outp", "vss", cl);
  b.passive("CLO2", "outn", "vss", cl);
  b.group({"CLO1", "CLO2"});
  // A one-sided parasitic breaks the perfect left/right mirror.
  if (rng.chance(0.40)) b.passive("CPAR1", "outp", "vss", capacitor_except(rng, cl));

  // Series divider: equal halves that are not a matched pair.
  if (rng.chance(0.25)) {
    double r = rng.pick(kResistorValues);
    b.passive("RB1", "vdd", "vb", r);
    b.passive("RB2", "vb", "vss", r);
  }

  bool pmos_first = rng.chance(0.4);
  add_dummies(b, rng, pmos_first);
  if (rng.chance(0.35)) add_dummies(b, rng, !pmos_first);
}

// Bias distribution: one NMOS mirror bank, optional cascode row, optional
// PMOS mirror, optional output filters.
void build_mirror_bank(Builder& b, Rng& rng) {
  for (const char* p : {"vdd", "vss", "ob1", "ob2"}) b.port(p);

  MosSize sz = random_mos(rng, kNmosModels);
  bool cascode = rng.chance(0.35);

  b.passive("RTOP1", "vdd", "nbias", rng.pick(kResistorValues));
  b.mos("MM0", "nbias", "nbias", "vss", "vss", sz);
  b.mos("MM1", cascode ? "m1" : "ob1", "nbias", "vss", "vss", sz);
  b.mos("MM2", cascode ? "m2" : "ob2", "nbias", "vss", "vss", sz);
  b.group({"MM0", "MM1", "MM2"});
  if (rng.chance(0.30)) {
    b.port("ob3");
    b.mos("MM3", "ob3", "nbias", "vss", "vss", resized(rng, sz));
  }

  if (cascode) {
    MosSize csz = random_mos(rng, kNmosModels);
    double rc = rng.pick(kResistorValues);
    b.mos("MC1", "ob1", "vcasc", "m1", "vss", csz);
    b.mos("MC2", "ob2", "vcasc", "m2", "vss", csz);
    b.group({"MC1", "MC2"});
    b.passive("RC1", "vdd", "vcasc", rc);
    b.passive("RC2", "vcasc", "vss", rng.chance(0.3) ? rc : resistor_except(rng, rc));
  }

  if (rng.chance(0.55)) {
    b.port("pb1");
    MosSize psz = random_mos(rng, kPmosModels);
    b.passive("RBOT1", "pbias", "vss", rng.pick(kResistorValues));
    b.mos("MPM0", "pbias", "pbias", "vdd", "vdd", psz);
    b.mos("MPM1", "pb1", "pbias", "vdd", "vdd", psz);
    b.group({"MPM0", "MPM1"});
  }

  if (rng.chance(0.30)) {
    double lv = rng.pick(kInductorValues);
    double cv = rng.pick(kCapacitorValues);
    b.passive("LF1", "ob1", "lx1", lv);
    b.passive("CF1", "lx1", "vss", cv);
    b.passive("LF2", "ob2", "lx2", lv);
    b.passive("CF2", "lx2", "vss", cv);
    b.group({"LF1", "LF2"});
    b.group({"CF1", "CF2"});
  }

  // Switch with mirror geometry but an externally driven gate.
  if (rng.chance(0.40)) {
    b.port("en");
    b.mos("MSW1", "ob1", "en", "vss", "vss", sz);
  }

  if (rng.chance(0.50)) add_vth_trap(b, rng);
  add_dummies(b, rng, false);
}

// Bipolar input stage with a mirrored NMOS tail and either resistor or PNP
// mirror loads; optional junction branch with one-sided degeneration.
void build_bjt_reference(Builder& b, Rng& rng) {
  for (const char* p : {"vdd", "vss", "inp", "inn", "outa", "outb"}) b.port(p);

  b.bjt("QA1", "outa", "inp", "ce", "npn_std");
  b.bjt("QA2", "outb", "inn", "ce", "npn_std");
  b.group({"QA1", "QA2"});

  if (rng.chance(0.60)) {
    double rl = rng.pick(kResistorValues);
    b.passive("RL1", "vdd", "outa", rl);
    b.passive("RL2", "vdd", "outb", rl);
    b.group({"RL1", "RL2"});
  } else {
    b.bjt("QP0", "pbb", "pbb", "vdd", "pnp_std");
    b.bjt("QP1", "outa", "pbb", "vdd", "pnp_std");
    b.bjt("QP2", "outb", "pbb", "vdd", "pnp_std");
    b.group({"QP0", "QP1", "QP2"});
    b.passive("RPB1", "pbb", "vss", rng.pick(kResistorValues));
  }

  MosSize tail = random_mos(rng, kNmosModels);
  b.mos("MBT0", "tbias", "tbias", "vss", "vss", tail);
  b.mos("MBT1", "ce", "tbias", "vss", "vss", tail);
  b.group({"MBT0", "MBT1"});
  b.passive("RBIAS1", "vdd", "tbias", rng.pick(kResistorValues));

  if (rng.chance(0.50)) {
    double rd = rng.pick(kResistorValues);
    if (rng.chance(0.5)) {
      b.bjt("QD1", "nd1", "nd1", "vss", "npn_std");
      b.bjt("QD2", "nd2", "nd2", "re", "npn_std");
    } else {
      b.diode("DD1", "nd1", "vss");
      b.diode("DD2", "nd2", "re");
    }
    b.passive("RE1", "re", "vss", resistor_except(rng, rd));
    b.passive("RD1", "vdd", "nd1", rd);
    b.passive("RD2", "vdd", "nd2", rd);
    b.group({"RD1", "RD2"});
  }

  if (rng.chance(0.30)) {
    b.diode("DCL1", "outa", "vdd");
    b.diode("DCL2", "vss", "outa");
  }

  add_dummies(b, rng, false);
}

const std::vector<std::string> kProfiles = {"ota", "comparator", "mirror_bank", "bjt_reference"};

}  // namespace

CircuitSample synth_circuit(const std::string& profile, std::uint64_t seed, int index) {
  Rng rng(splitmix64(seed ^ splitmix64(0x51C7 + static_cast<std::uint64_t>(index))));

  std::string prof = profile;
  if (prof == "mixed") {
    int roll = rng.below(100);
    prof = roll < 30 ? "ota" : roll < 55 ? "comparator" : roll < 80 ? "mirror_bank" : "bjt_reference";
  }

  Builder b;
  if (prof == "ota")
    build_ota(b, rng);
  else if (prof == "comparator")
    build_comparator(b, rng);
  else if (prof == "mirror_bank")
    build_mirror_bank(b, rng);
  else if (prof == "bjt_reference")
    build_bjt_reference(b, rng);
  else
    throw std::invalid_argument("unknown profile '" + profile +
                                "' (expected ota, comparator, mirror_bank, bjt_reference or mixed)");

  std::ostringstream name;
  name << prof << '_' << std::setw(3) << std::setfill('0') << index;
  return b.finish(name.str());
}

std::vector<CircuitSample> synth_dataset(const SynthConfig& cfg) {
  if (cfg.circuits < 1) throw std::invalid_argument("dataset needs at least one circuit");
  std::vector<CircuitSample> out;
  out.reserve(cfg.circuits);
  for (int i = 0; i < cfg.circuits; ++i) out.push_back(synth_circuit(cfg.profile, cfg.seed, i));
  return out;
}

DatasetStats dataset_stats(const std::vector<CircuitSample>& samples) {
  NormStats norm;
  for (const CircuitSample& s : samples) norm.accumulate(s.netlist);

  DatasetStats st;
  st.circuits = static_cast<int>(samples.size());
  for (const CircuitSample& s : samples) {
    st.devices += static_cast<int>(s.netlist.devices.size());
    CircuitGraph g = build_graph(s.netlist, norm);
    for (const PairSample& p : enumerate_valid_pairs(g, &s.groups)) {
      ++st.valid_pairs;
      if (p.label > 0) ++st.matched_pairs;
    }
  }
  return st;
}

void write_dataset(const std::vector<CircuitSample>& samples, const std::string& dir,
                   const DatasetStats* stats) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  auto write_file = [&](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
  };

  nlohmann::json manifest;
  manifest["circuits"] = nlohmann::json::array();
  for (const CircuitSample& s : samples) {
    std::string sp = s.name + ".sp";
    std::string gr = s.name + ".groups.json";
    write_file(fs::path(dir) / sp, emit_netlist(s.netlist));
    write_file(fs::path(dir) / gr, groups_to_json(s.groups));
    manifest["circuits"].push_back({{"name", s.name}, {"netlist", sp}, {"groups", gr}});
  }
  write_file(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");

  if (stats) {
    nlohmann::json j = {{"circuits", stats->circuits},
                        {"devices", stats->devices},
                        {"valid_pairs", stats->valid_pairs},
                        {"matched_pairs", stats->matched_pairs}};
    write_file(fs::path(dir) / "stats.json", j.dump(2) + "\n");
  }
}

std::vector<CircuitSample> read_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest '" + manifest_path + "': " + e.what());
  }
  if (!manifest.contains("circuits") || !manifest["circuits"].is_array())
    throw std::runtime_error("manifest '" + manifest_path + "' has no circuits array");

  fs::path base = fs::path(manifest_path).parent_path();
  auto slurp = [&](const std::string& rel) {
    fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + p.string() + "'");
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  };

  std::vector<CircuitSample> out;
  for (const auto& entry : manifest["circuits"]) {
    CircuitSample s;
    s.name = entry.at("name").get<std::string>();
    s.netlist = parse_netlist(slurp(entry.at("netlist").get<std::string>()));
    s.groups = groups_from_json(slurp(entry.at("groups").get<std::string>()));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace symx
