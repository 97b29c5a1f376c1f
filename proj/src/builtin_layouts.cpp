#include <stdexcept>

#include "atomchip/errors.hpp"
#include "atomchip/layout.hpp"

// Bundled chip layouts. Coordinates: chip surface is the plane z = 0, thin and
// U wire bars run along y, the bias field points along -x so that it cancels
// the field of a +y current above the wire. The "ioffe" parameter is a
// longitudinal bias component along -y, the direction in which the arms of a
// Z wire add to it.
//
// Arm lengths and wire spacings are modeled values; only the wire widths, the
// currents and the bias magnitudes come from the experiment being modeled.

namespace atomchip {

namespace {

constexpr double um = 1e-6;
constexpr double mm = 1e-3;
constexpr double G = 1e-4;

LayoutParameters side_guide_defaults() {
  return {{"current", 0.2}, {"bias", 40 * G}, {"ioffe", 0.0}, {"length", 20 * mm}, {"width", 10 * um},
          {"thickness", 2.5 * um}};
}

LayoutParameters u_trap_defaults() {
  return {{"current", 2.0}, {"bias", 20 * G}, {"ioffe", 0.0},        {"bar", 2 * mm},
          {"arm", 2 * mm},  {"width", 200 * um}, {"thickness", 2.5 * um}};
}

LayoutParameters z_trap_defaults() {
  return {{"current", 0.2}, {"bias", 40 * G}, {"ioffe", 1 * G},     {"bar", 1.85 * mm},
          {"arm", 2 * mm},  {"width", 10 * um}, {"thickness", 2.5 * um}};
}

LayoutParameters two_u_defaults() {
  return {{"u_current", 2.0},
          {"thin_current", 0.3},
          {"underchip_current", 0.0},
          {"bias", 19 * G},
          {"ioffe", 4 * G},
          {"u_offset", 115 * um},
          {"u_bar", 2 * mm},
          {"u_arm", 2 * mm},
          {"u_width", 200 * um},
          {"thin_bar", 2.3 * mm},
          {"thin_arm", 2 * mm},
          {"thin_width", 10 * um},
          {"thickness", 2.5 * um},
          {"underchip_bar", 8 * mm},
          {"underchip_arm", 8 * mm},
          {"underchip_depth", 600 * um},
          {"underchip_width", 1 * mm},
          {"underchip_thickness", 1 * mm}};
}

LayoutParameters under_chip_defaults() {
  return {{"current", 16.0},      {"bias", 8 * G},  {"ioffe", 0.0},    {"offset", 115 * um}, {"bar", 8 * mm},
          {"arm", 8 * mm},        {"depth", 600 * um}, {"width", 1 * mm}, {"thickness", 1 * mm}};
}

LayoutParameters onchip_defaults() {
  auto p = two_u_defaults();
  p["u_current"] = -2.0;
  p["bias"] = 0.0;
  p["ioffe"] = 0.0;
  return p;
}

LayoutParameters merged(LayoutParameters defaults, const LayoutParameters& overrides, std::string_view name) {
  for (const auto& [k, v] : overrides) {
    auto it = defaults.find(k);
    if (it == defaults.end())
      throw std::invalid_argument("layout '" + std::string(name) + "' has no parameter '" + k + "'");
    it->second = v;
  }
  return defaults;
}

Vec3 bias_vector(const LayoutParameters& p) { return {-p.at("bias"), -p.at("ioffe"), 0.0}; }

// U opening towards `side` (+1: arms toward +x, -1: toward -x), bar at x = x0.
std::vector<Vec3> u_path(double x0, double bar, double arm, double side, double z) {
  const double xa = x0 + side * arm;
  return {{xa, -bar / 2, z}, {x0, -bar / 2, z}, {x0, bar / 2, z}, {xa, bar / 2, z}};
}

std::vector<Vec3> z_path(double bar, double arm) {
  return {{-arm, -bar / 2, 0.0}, {0.0, -bar / 2, 0.0}, {0.0, bar / 2, 0.0}, {arm, bar / 2, 0.0}};
}

ChipLayout make_side_guide(const LayoutParameters& p) {
  ChipLayout l;
  l.label = "side-guide";
  l.bias.vector = bias_vector(p);
  const double half = p.at("length") / 2;
  l.wires.push_back({"guide", {{0.0, -half, 0.0}, {0.0, half, 0.0}}, p.at("width"), p.at("thickness"), p.at("current")});
  return l;
}

ChipLayout make_u_trap(const LayoutParameters& p) {
  ChipLayout l;
  l.label = "u-trap-200";
  l.bias.vector = bias_vector(p);
  l.wires.push_back({"u", u_path(0.0, p.at("bar"), p.at("arm"), -1.0, 0.0), p.at("width"), p.at("thickness"),
                     p.at("current")});
  return l;
}

ChipLayout make_z_trap(const LayoutParameters& p) {
  ChipLayout l;
  l.label = "z-trap-10";
  l.bias.vector = bias_vector(p);
  l.wires.push_back({"z", z_path(p.at("bar"), p.at("arm")), p.at("width"), p.at("thickness"), p.at("current")});
  return l;
}

Wire underchip_wire(double offset, double bar, double arm, double depth, double width, double thickness,
                    double current) {
  return {"underchip", u_path(offset, bar, arm, +1.0, -depth), width, thickness, current};
}

// Two mirror-image 200 um U wires flanking a thin Z wire, with the 1 mm wire
// under the chip below the right-hand U. The under-chip U is larger than the
// chip U's so that its 16 A / 8 G quadrupole sits about 2 mm above the chip.
ChipLayout make_two_u(const LayoutParameters& p, std::string label) {
  ChipLayout l;
  l.label = std::move(label);
  l.bias.vector = bias_vector(p);
  const double s = p.at("u_offset");
  const double t = p.at("thickness");
  l.wires.push_back({"u1", u_path(+s, p.at("u_bar"), p.at("u_arm"), +1.0, 0.0), p.at("u_width"), t, p.at("u_current")});
  l.wires.push_back({"u2", u_path(-s, p.at("u_bar"), p.at("u_arm"), -1.0, 0.0), p.at("u_width"), t, p.at("u_current")});
  l.wires.push_back({"thin", z_path(p.at("thin_bar"), p.at("thin_arm")), p.at("thin_width"), t, p.at("thin_current")});
  l.wires.push_back(underchip_wire(s, p.at("underchip_bar"), p.at("underchip_arm"), p.at("underchip_depth"), p.at("underchip_width"),
                                   p.at("underchip_thickness"), p.at("underchip_current")));
  return l;
}

ChipLayout make_under_chip(const LayoutParameters& p) {
  ChipLayout l;
  l.label = "under-chip-u";
  l.bias.vector = bias_vector(p);
  l.wires.push_back(underchip_wire(p.at("offset"), p.at("bar"), p.at("arm"), p.at("depth"), p.at("width"),
                                   p.at("thickness"), p.at("current")));
  return l;
}

}  // namespace

std::vector<std::string> builtin_layout_names() {
  return {"side-guide", "u-trap-200", "z-trap-10", "two-u-plus-thin", "under-chip-u", "onchip-bias"};
}

LayoutParameters builtin_layout_defaults(std::string_view name) {
  if (name == "side-guide") return side_guide_defaults();
  if (name == "u-trap-200") return u_trap_defaults();
  if (name == "z-trap-10") return z_trap_defaults();
  if (name == "two-u-plus-thin") return two_u_defaults();
  if (name == "under-chip-u") return under_chip_defaults();
  if (name == "onchip-bias") return onchip_defaults();
  throw UnknownLayout("unknown builtin layout '" + std::string(name) + "'");
}

ChipLayout builtin_layout(std::string_view name, const LayoutParameters& overrides) {
  const auto p = merged(builtin_layout_defaults(name), overrides, name);
  if (name == "side-guide") return make_side_guide(p);
  if (name == "u-trap-200") return make_u_trap(p);
  if (name == "z-trap-10") return make_z_trap(p);
  if (name == "two-u-plus-thin") return make_two_u(p, "two-u-plus-thin");
  if (name == "under-chip-u") return make_under_chip(p);
  return make_two_u(p, "onchip-bias");
}

}  // namespace atomchip
