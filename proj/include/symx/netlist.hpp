#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace symx {

// One-hot order of the node type feature; do not reorder.
enum class DeviceKind { nmos, pmos, npn, pnp, diode, resistor, capacitor, inductor, io };
constexpr int kDeviceKindCount = 9;
const char* to_string(DeviceKind k);

enum class PinRole { gate, drain, source, bulk, base, collector, emitter, anode, cathode, terminal_a, terminal_b };
const char* to_string(PinRole r);

struct Pin {
  PinRole role{};
  std::string net;
  bool operator==(const Pin&) const = default;
};

struct Device {
  std::string id;                 // card name, e.g. "M1"; first letter fixes the card type
  DeviceKind kind = DeviceKind::nmos;
  std::string model;              // empty for R/C/L
  double length = 0.0;            // R/C/L store their component value in both slots
  double width = 0.0;
  int fingers = 1;
  std::vector<Pin> pins;          // card order: d g s b / c b e / a c / a b
  bool is_dummy = false;

  double unit_width() const { return width / fingers; }
  const Pin* find_pin(PinRole role) const;
  bool operator==(const Device&) const = default;
};

struct Netlist {
  std::string name;
  std::vector<Device> devices;
  std::vector<std::string> io_ports;   // declaration order; a port name is its net name
  std::set<std::string> nets;
  std::set<std::string> power_nets;    // subset of nets, recognized at parse time
  std::set<std::string> ground_nets;
  bool operator==(const Netlist&) const = default;
};

struct ParseOptions {
  std::vector<std::string> power_names = {"vdd", "vcc", "avdd"};
  std::vector<std::string> ground_names = {"gnd", "vss", "0", "avss"};
  std::vector<std::string> dummy_patterns = {"*dmy*", "*dummy*"};  // case-insensitive globs
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

// Parses one flat .SUBCKT block. Comments ('*' lines) and '+' continuations are
// handled; every other line must be a device card or subckt directive.
Netlist parse_netlist(const std::string& text, const ParseOptions& opt = {});

// Canonical text form: .SUBCKT header, device cards sorted by id, .ENDS.
// Numbers are shortest-round-trip decimals, so parse(emit(n)) == n.
std::string emit_netlist(const Netlist& n);

// Sets is_dummy where the id matches a glob pattern (case-insensitive) or a
// MOS device has gate, drain and source collapsed onto one net.
void mark_dummies(Netlist& n, const std::vector<std::string>& patterns);

bool is_mos(DeviceKind k);
bool is_passive(DeviceKind k);  // R/C/L

// "10k" -> 1e4; suffixes f p n u m k meg g, case-insensitive.
double parse_spice_value(const std::string& tok);
std::string format_value(double v);

}  // namespace symx
