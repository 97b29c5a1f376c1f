#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atomchip/quantities.hpp"

namespace atomchip {

// A surface-mounted conductor. `path` is the centerline of the conductor's
// mid-plane; positive current flows from the first vertex to the last. Open
// ends are fed by straight leads running perpendicular into the substrate
// (see magnetostatics.hpp); a path whose last vertex equals its first is a
// closed loop and has no leads.
struct Wire {
  std::string id;
  std::vector<Vec3> path;  // m
  double width = 10e-6;    // m
  double thickness = 2.5e-6;
  double current = 0.0;  // A

  bool closed() const { return path.size() > 2 && path.front() == path.back(); }
};

struct BiasField {
  Vec3 vector = Vec3::Zero();  // T, uniform
};

struct ChipLayout {
  std::string label;
  std::vector<Wire> wires;
  BiasField bias;
  double surface_z = 0.0;  // atoms live at z > surface_z

  const Wire* find_wire(std::string_view id) const;
  Wire* find_wire(std::string_view id);
};

enum class Severity { warning, error };

struct Diagnostic {
  Severity severity;
  std::string wire_id;  // empty for layout-wide findings
  std::string message;
  double measured = 0.0;

  bool operator==(const Diagnostic&) const = default;
};

struct ValidationReport {
  std::vector<Diagnostic> diagnostics;

  bool has_errors() const;
  bool operator==(const ValidationReport&) const = default;
};

// Current density thresholds in A/m^2: warn above 1e6 A/cm^2, reject above 10x that.
inline constexpr double kCurrentDensityWarn = 1e10;
inline constexpr double kCurrentDensityError = 1e11;
inline constexpr double kBiasSanityLimit = 1.0;  // T

// Reads the JSON layout format. Quantities carry explicit unit tags and are
// converted to SI; thickness defaults to 2.5 um. Unknown keys are rejected.
ChipLayout parse_layout(std::string_view text);
ChipLayout load_layout(const std::string& path);

// Writes the same format in SI units with round-trip precision.
std::string serialize_layout(const ChipLayout& layout);

ValidationReport validate(const ChipLayout& layout);

// Named numeric overrides for builtin layouts, in SI (A, T, m).
using LayoutParameters = std::map<std::string, double>;

// Bundled layouts: side-guide, u-trap-200, z-trap-10, two-u-plus-thin,
// under-chip-u, onchip-bias. Throws UnknownLayout, or std::invalid_argument
// for parameters the layout does not know.
ChipLayout builtin_layout(std::string_view name, const LayoutParameters& overrides = {});
std::vector<std::string> builtin_layout_names();

// Documented default parameters of a builtin (what overrides may change).
LayoutParameters builtin_layout_defaults(std::string_view name);

// "builtin:<name>" or a file path.
ChipLayout resolve_layout(const std::string& spec);

}  // namespace atomchip
