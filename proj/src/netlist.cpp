#include "symx/netlist.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace symx {

const char* to_string(DeviceKind k) {
  switch (k) {
    case DeviceKind::nmos: return "nmos";
    case DeviceKind::pmos: return "pmos";
    case DeviceKind::npn: return "npn";
    case DeviceKind::pnp: return "pnp";
    case DeviceKind::diode: return "diode";
    case DeviceKind::resistor: return "resistor";
    case DeviceKind::capacitor: return "capacitor";
    case DeviceKind::inductor: return "inductor";
    case DeviceKind::io: return "io";
  }
  return "?";
}

const char* to_string(PinRole r) {
  switch (r) {
    case PinRole::gate: return "gate";
    case PinRole::drain: return "drain";
    case PinRole::source: return "source";
    case PinRole::bulk: return "bulk";
    case PinRole::base: return "base";
    case PinRole::collector: return "collector";
    case PinRole::emitter: return "emitter";
    case PinRole::anode: return "anode";
    case PinRole::cathode: return "cathode";
    case PinRole::terminal_a: return "terminal-a";
    case PinRole::terminal_b: return "terminal-b";
  }
  return "?";
}

const Pin* Device::find_pin(PinRole role) const {
  for (const Pin& p : pins)
    if (p.role == role) return &p;
  return nullptr;
}

bool is_mos(DeviceKind k) { return k == DeviceKind::nmos || k == DeviceKind::pmos; }

bool is_passive(DeviceKind k) {
  return k == DeviceKind::resistor || k == DeviceKind::capacitor || k == DeviceKind::inductor;
}

ParseError::ParseError(int line, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct Card {
  int line;
  std::vector<std::string> toks;
};

// Joins '+' continuations and drops '*' comments / blank lines.
std::vector<Card> logical_cards(const std::string& text) {
  std::vector<Card> cards;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    size_t i = raw.find_first_not_of(" \t\r");
    if (i == std::string::npos) continue;
    if (raw[i] == '*') continue;
    if (raw[i] == '+') {
      if (cards.empty()) throw ParseError(lineno, "continuation with no previous card");
      auto more = split_ws(raw.substr(i + 1));
      auto& t = cards.back().toks;
      t.insert(t.end(), more.begin(), more.end());
      continue;
    }
    cards.push_back({lineno, split_ws(raw.substr(i))});
  }
  return cards;
}

bool name_in(const std::string& net, const std::vector<std::string>& names) {
  std::string n = lower(net);
  return std::any_of(names.begin(), names.end(), [&](const std::string& p) { return lower(p) == n; });
}

double value_or_throw(const std::string& tok, int line) {
  try {
    return parse_spice_value(tok);
  } catch (const std::exception& e) {
    throw ParseError(line, e.what());
  }
}

// MOS/BJT polarity comes from the model name's first letter.
bool model_is_p(const std::string& model, int line) {
  if (model.empty()) throw ParseError(line, "empty model name");
  char c = static_cast<char>(std::tolower(static_cast<unsigned char>(model[0])));
  if (c == 'p') return true;
  if (c == 'n') return false;
  throw ParseError(line, "cannot tell device polarity from model '" + model + "'");
}

Device parse_mos(const Card& c) {
  if (c.toks.size() < 6) throw ParseError(c.line, "MOS card needs drain gate source bulk model");
  Device d;
  d.id = c.toks[0];
  d.kind = model_is_p(c.toks[5], c.line) ? DeviceKind::pmos : DeviceKind::nmos;
  d.model = c.toks[5];
  d.pins = {{PinRole::drain, c.toks[1]},
            {PinRole::gate, c.toks[2]},
            {PinRole::source, c.toks[3]},
            {PinRole::bulk, c.toks[4]}};
  bool have_l = false, have_w = false;
  for (size_t i = 6; i < c.toks.size(); ++i) {
    const std::string& t = c.toks[i];
    size_t eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(c.line, "expected key=value, got '" + t + "'");
    std::string key = lower(t.substr(0, eq));
    std::string val = t.substr(eq + 1);
    if (key == "l") {
      d.length = value_or_throw(val, c.line);
      have_l = true;
    } else if (key == "w") {
      d.width = value_or_throw(val, c.line);
      have_w = true;
    } else if (key == "nf") {
      int nf = 0;
      auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), nf);
      if (ec != std::errc{} || p != val.data() + val.size() || nf < 1)
        throw ParseError(c.line, "nf must be a positive integer");
      d.fingers = nf;
    } else {
      throw ParseError(c.line, "undefined parameter '" + key + "'");
    }
  }
  if (!have_l || !have_w) throw ParseError(c.line, "MOS card missing L= or W=");
  if (d.length <= 0 || d.width <= 0) throw ParseError(c.line, "device size must be positive");
  return d;
}

Device parse_bjt(const Card& c) {
  if (c.toks.size() != 5) throw ParseError(c.line, "BJT card needs collector base emitter model");
  Device d;
  d.id = c.toks[0];
  d.kind = model_is_p(c.toks[4], c.line) ? DeviceKind::pnp : DeviceKind::npn;
  d.model = c.toks[4];
  d.pins = {{PinRole::collector, c.toks[1]}, {PinRole::base, c.toks[2]}, {PinRole::emitter, c.toks[3]}};
  d.length = d.width = 1.0;  // BJTs carry no geometry in this grammar
  return d;
}

Device parse_diode(const Card& c) {
  if (c.toks.size() != 4) throw ParseError(c.line, "diode card needs anode cathode model");
  Device d;
  d.id = c.toks[0];
  d.kind = DeviceKind::diode;
  d.model = c.toks[3];
  d.pins = {{PinRole::anode, c.toks[1]}, {PinRole::cathode, c.toks[2]}};
  d.length = d.width = 1.0;
  return d;
}

Device parse_two_terminal(const Card& c, DeviceKind kind) {
  if (c.toks.size() != 4) throw ParseError(c.line, "passive card needs two nets and a value");
  Device d;
  d.id = c.toks[0];
  d.kind = kind;
  d.pins = {{PinRole::terminal_a, c.toks[1]}, {PinRole::terminal_b, c.toks[2]}};
  double v = value_or_throw(c.toks[3], c.line);
  if (v <= 0) throw ParseError(c.line, "component value must be positive");
  d.length = d.width = v;
  return d;
}

}  // namespace

double parse_spice_value(const std::string& tok) {
  if (tok.empty()) throw std::invalid_argument("empty numeric value");
  double base = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), base);
  if (ec != std::errc{}) throw std::invalid_argument("bad numeric value '" + tok + "'");
  static const std::map<std::string, int> suffixes = {
      {"", 0},   {"f", -15}, {"p", -12}, {"n", -9}, {"u", -6},
      {"m", -3}, {"k", 3},   {"meg", 6}, {"g", 9}};
  std::string num(tok.data(), p);
  std::string suf = lower(std::string(p, tok.data() + tok.size()));
  auto it = suffixes.find(suf);
  if (it == suffixes.end()) throw std::invalid_argument("unknown unit suffix '" + suf + "'");
  if (it->second == 0) return base;
  if (num.find_first_of("eE") == std::string::npos) {
    // Fold the unit suffix into the decimal exponent and convert once, so
    // "10u" yields exactly the double nearest 1e-5 rather than 10 * 1e-6.
    std::string folded = num + 'e' + std::to_string(it->second);
    double exact = 0;
    auto [q, ec2] = std::from_chars(folded.data(), folded.data() + folded.size(), exact);
    if (ec2 == std::errc{} && q == folded.data() + folded.size()) return exact;
  }
  return static_cast<double>(static_cast<long double>(base) *
                             std::pow(10.0L, static_cast<long double>(it->second)));
}

std::string format_value(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Netlist parse_netlist(const std::string& text, const ParseOptions& opt) {
  Netlist n;
  bool in_subckt = false, seen_subckt = false, seen_ends = false;
  std::map<std::string, int> seen_ids;

  for (const Card& c : logical_cards(text)) {
    const std::string head = lower(c.toks[0]);
    if (head == ".subckt") {
      if (seen_subckt) throw ParseError(c.line, "second .SUBCKT; netlists here are flat");
      if (c.toks.size() < 2) throw ParseError(c.line, ".SUBCKT needs a name");
      n.name = c.toks[1];
      for (size_t i = 2; i < c.toks.size(); ++i) {
        if (std::find(n.io_ports.begin(), n.io_ports.end(), c.toks[i]) != n.io_ports.end())
          throw ParseError(c.line, "duplicate port '" + c.toks[i] + "'");
        n.io_ports.push_back(c.toks[i]);
      }
      in_subckt = seen_subckt = true;
      continue;
    }
    if (head == ".ends") {
      if (!in_subckt) throw ParseError(c.line, ".ENDS without .SUBCKT");
      if (c.toks.size() > 1 && c.toks[1] != n.name)
        throw ParseError(c.line, ".ENDS name does not match .SUBCKT");
      in_subckt = false;
      seen_ends = true;
      continue;
    }
    if (head[0] == '.') throw ParseError(c.line, "unsupported directive '" + c.toks[0] + "'");
    if (!in_subckt) throw ParseError(c.line, "device card outside .SUBCKT");

    Device d;
    switch (head[0]) {
      case 'm': d = parse_mos(c); break;
      case 'q': d = parse_bjt(c); break;
      case 'd': d = parse_diode(c); break;
      case 'r': d = parse_two_terminal(c, DeviceKind::resistor); break;
      case 'c': d = parse_two_terminal(c, DeviceKind::capacitor); break;
      case 'l': d = parse_two_terminal(c, DeviceKind::inductor); break;
      default: throw ParseError(c.line, "unknown device card '" + c.toks[0] + "'");
    }
    if (auto [it, fresh] = seen_ids.emplace(d.id, c.line); !fresh)
      throw ParseError(c.line, "duplicate device id '" + d.id + "' (first at line " +
                                   std::to_string(it->second) + ")");
    n.devices.push_back(std::move(d));
  }

  if (!seen_subckt) throw ParseError(1, "no .SUBCKT block found");
  if (!seen_ends) throw ParseError(1, "missing .ENDS");

  for (const std::string& p : n.io_ports) n.nets.insert(p);
  for (const Device& d : n.devices)
    for (const Pin& p : d.pins) n.nets.insert(p.net);
  for (const std::string& net : n.nets) {
    if (name_in(net, opt.power_names)) n.power_nets.insert(net);
    if (name_in(net, opt.ground_names)) n.ground_nets.insert(net);
  }
  mark_dummies(n, opt.dummy_patterns);
  return n;
}

std::string emit_netlist(const Netlist& n) {
  std::vector<const Device*> order;
  order.reserve(n.devices.size());
  for (const Device& d : n.devices) order.push_back(&d);
  std::sort(order.begin(), order.end(),
            [](const Device* a, const Device* b) { return a->id < b->id; });

  std::ostringstream out;
  out << ".SUBCKT " << n.name;
  for (const std::string& p : n.io_ports) out << ' ' << p;
  out << '\n';
  for (const Device* d : order) {
    out << d->id;
    for (const Pin& p : d->pins) out << ' ' << p.net;
    switch (d->kind) {
      case DeviceKind::nmos:
      case DeviceKind::pmos:
        out << ' ' << d->model << " L=" << format_value(d->length) << " W=" << format_value(d->width)
            << " nf=" << d->fingers;
        break;
      case DeviceKind::npn:
      case DeviceKind::pnp:
      case DeviceKind::diode:
        out << ' ' << d->model;
        break;
      default:
        out << ' ' << format_value(d->length);
    }
    out << '\n';
  }
  out << ".ENDS\n";
  return out.str();
}

void mark_dummies(Netlist& n, const std::vector<std::string>& patterns) {
  for (const std::string& p : patterns) {
    // fnmatch treats an unclosed '[' as a literal; we call it out instead.
    long depth = std::count(p.begin(), p.end(), '[') - std::count(p.begin(), p.end(), ']');
    if (depth != 0) throw std::invalid_argument("invalid dummy pattern '" + p + "'");
  }
  for (Device& d : n.devices) {
    d.is_dummy = false;
    std::string id = lower(d.id);
    for (const std::string& p : patterns)
      if (fnmatch(lower(p).c_str(), id.c_str(), 0) == 0) d.is_dummy = true;
    if (!d.is_dummy && is_mos(d.kind)) {
      const std::string& g = d.find_pin(PinRole::gate)->net;
      d.is_dummy = g == d.find_pin(PinRole::drain)->net && g == d.find_pin(PinRole::source)->net;
    }
  }
}

}  // namespace symx
