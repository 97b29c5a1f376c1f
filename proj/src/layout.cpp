#include "atomchip/layout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "atomchip/errors.hpp"

namespace atomchip {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const Wire* ChipLayout::find_wire(std::string_view id) const {
  for (const auto& w : wires)
    if (w.id == id) return &w;
  return nullptr;
}

Wire* ChipLayout::find_wire(std::string_view id) {
  for (auto& w : wires)
    if (w.id == id) return &w;
  return nullptr;
}

bool ValidationReport::has_errors() const {
  for (const auto& d : diagnostics)
    if (d.severity == Severity::error) return true;
  return false;
}

namespace {

int line_of_offset(std::string_view text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where, "expected an object");
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ParseError(where + "/" + key, "unknown key '" + key + "'");
}

const json& field(const json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw MissingField(where + "/" + key, "missing field '" + key + "'");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(where, "number is not finite");
  return v;
}

std::string unit_tag(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where, "expected a unit tag string");
  return j.get<std::string>();
}

double to_si(double value, const std::string& unit, const char* si_unit, const std::string& where) {
  try {
    return convert(value, unit, si_unit);
  } catch (const UnknownUnit& e) {
    throw UnknownUnit(where + ": " + e.what());
  } catch (const IncompatibleUnits& e) {
    throw ParseError(where, e.what());
  }
}

// {value, unit} -> SI
double quantity(const json& j, const char* si_unit, const std::string& where) {
  require_object(j, where);
  reject_unknown_keys(j, {"value", "unit"}, where);
  const double v = number(field(j, "value", where), where + "/value");
  const auto unit = unit_tag(field(j, "unit", where), where + "/unit");
  return to_si(v, unit, si_unit, where + "/unit");
}

Wire parse_wire(const json& j, const std::string& where) {
  require_object(j, where);
  reject_unknown_keys(j, {"id", "width", "thickness", "current", "path", "path_unit"}, where);
  Wire w;
  const auto& id = field(j, "id", where);
  if (!id.is_string() || id.get<std::string>().empty()) throw ParseError(where + "/id", "expected a non-empty string");
  w.id = id.get<std::string>();
  w.width = quantity(field(j, "width", where), "m", where + "/width");
  if (j.contains("thickness")) w.thickness = quantity(j["thickness"], "m", where + "/thickness");
  w.current = quantity(field(j, "current", where), "A", where + "/current");

  const auto path_unit = unit_tag(field(j, "path_unit", where), where + "/path_unit");
  const double scale = to_si(1.0, path_unit, "m", where + "/path_unit");
  const auto& path = field(j, "path", where);
  if (!path.is_array()) throw ParseError(where + "/path", "expected an array of [x,y,z] vertices");
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto vw = where + "/path/" + std::to_string(i);
    const auto& v = path[i];
    if (!v.is_array() || v.size() != 3) throw ParseError(vw, "expected [x,y,z]");
    w.path.emplace_back(number(v[0], vw) * scale, number(v[1], vw) * scale, number(v[2], vw) * scale);
  }

  if (w.path.size() < 2) throw ParseError(where + "/path", "a wire needs at least 2 vertices");
  for (std::size_t i = 1; i < w.path.size(); ++i)
    if (w.path[i] == w.path[i - 1])
      throw ParseError(where + "/path/" + std::to_string(i), "consecutive vertices coincide");
  if (!(w.width > 0.0)) throw ParseError(where + "/width", "width must be positive");
  if (!(w.thickness > 0.0)) throw ParseError(where + "/thickness", "thickness must be positive");
  return w;
}

ChipLayout parse_document(const json& doc) {
  const std::string root;
  require_object(doc, "/");
  reject_unknown_keys(doc, {"label", "surface_z", "bias", "wires"}, root);

  ChipLayout layout;
  if (doc.contains("label")) {
    if (!doc["label"].is_string()) throw ParseError("/label", "expected a string");
    layout.label = doc["label"].get<std::string>();
  }
  layout.surface_z = quantity(field(doc, "surface_z", root), "m", "/surface_z");

  const auto& bias = field(doc, "bias", root);
  require_object(bias, "/bias");
  reject_unknown_keys(bias, {"x", "y", "z", "unit"}, "/bias");
  const auto bunit = unit_tag(field(bias, "unit", "/bias"), "/bias/unit");
  const double bscale = to_si(1.0, bunit, "T", "/bias/unit");
  layout.bias.vector = Vec3(number(field(bias, "x", "/bias"), "/bias/x"), number(field(bias, "y", "/bias"), "/bias/y"),
                            number(field(bias, "z", "/bias"), "/bias/z")) *
                       bscale;

  const auto& wires = field(doc, "wires", root);
  if (!wires.is_array()) throw ParseError("/wires", "expected an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < wires.size(); ++i) {
    const auto where = "/wires/" + std::to_string(i);
    auto w = parse_wire(wires[i], where);
    if (!ids.insert(w.id).second) throw ParseError(where + "/id", "duplicate wire id '" + w.id + "'");
    layout.wires.push_back(std::move(w));
  }
  return layout;
}

}  // namespace

ChipLayout parse_layout(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("", e.what(), line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  return parse_document(doc);
}

ChipLayout load_layout(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open layout file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_layout(ss.str());
}

std::string serialize_layout(const ChipLayout& layout) {
  ojson doc;
  doc["label"] = layout.label;
  doc["surface_z"] = {{"value", layout.surface_z}, {"unit", "m"}};
  doc["bias"] = {{"x", layout.bias.vector.x()},
                 {"y", layout.bias.vector.y()},
                 {"z", layout.bias.vector.z()},
                 {"unit", "T"}};
  auto wires = ojson::array();
  for (const auto& w : layout.wires) {
    ojson jw;
    jw["id"] = w.id;
    jw["width"] = {{"value", w.width}, {"unit", "m"}};
    jw["thickness"] = {{"value", w.thickness}, {"unit", "m"}};
    jw["current"] = {{"value", w.current}, {"unit", "A"}};
    auto path = ojson::array();
    for (const auto& v : w.path) path.push_back({v.x(), v.y(), v.z()});
    jw["path"] = std::move(path);
    jw["path_unit"] = "m";
    wires.push_back(std::move(jw));
  }
  doc["wires"] = std::move(wires);
  return doc.dump(2) + "\n";
}

namespace {

double segment_distance_2d(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1) {
  using V2 = Eigen::Vector2d;
  auto point_seg = [](const V2& p, const V2& s0, const V2& s1) {
    const V2 d = s1 - s0;
    const double t = std::clamp((p - s0).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (p - (s0 + t * d)).norm();
  };
  const V2 p0 = a0.head<2>(), p1 = a1.head<2>(), q0 = b0.head<2>(), q1 = b1.head<2>();
  auto cross = [](const V2& u, const V2& v) { return u.x() * v.y() - u.y() * v.x(); };
  const V2 r = p1 - p0, s = q1 - q0;
  const double den = cross(r, s);
  if (den != 0.0) {
    const double t = cross(q0 - p0, s) / den;
    const double u = cross(q0 - p0, r) / den;
    if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
  }
  return std::min({point_seg(p0, q0, q1), point_seg(p1, q0, q1), point_seg(q0, p0, p1), point_seg(q1, p0, p1)});
}

bool is_planar(const Vec3& a, const Vec3& b) { return a.z() == b.z() && a.head<2>() != b.head<2>(); }

}  // namespace

ValidationReport validate(const ChipLayout& layout) {
  ValidationReport report;
  auto emit = [&](Severity s, const std::string& id, std::string msg, double measured) {
    report.diagnostics.push_back({s, id, std::move(msg), measured});
  };

  if (!std::isfinite(layout.surface_z)) emit(Severity::error, "", "surface_z is not finite", layout.surface_z);

  const Vec3& b = layout.bias.vector;
  if (!b.allFinite()) {
    emit(Severity::error, "", "bias field is not finite", 0.0);
  } else if (b.norm() >= kBiasSanityLimit) {
    emit(Severity::warning, "", "bias magnitude of 1 T or more is implausible for a chip experiment", b.norm());
  }

  std::set<std::string> ids;
  for (const auto& w : layout.wires) {
    if (!ids.insert(w.id).second) emit(Severity::error, w.id, "duplicate wire id", 0.0);
    if (w.path.size() < 2) {
      emit(Severity::error, w.id, "wire has fewer than 2 vertices", static_cast<double>(w.path.size()));
      continue;
    }
    for (std::size_t i = 0; i < w.path.size(); ++i) {
      if (!w.path[i].allFinite()) emit(Severity::error, w.id, "vertex " + std::to_string(i) + " is not finite", 0.0);
      if (i > 0 && (w.path[i] - w.path[i - 1]).norm() == 0.0)
        emit(Severity::error, w.id, "degenerate segment: vertices " + std::to_string(i - 1) + " and " +
                                        std::to_string(i) + " coincide", 0.0);
    }
    if (!(w.width > 0.0) || !std::isfinite(w.width)) emit(Severity::error, w.id, "width must be positive", w.width);
    if (!(w.thickness > 0.0) || !std::isfinite(w.thickness))
      emit(Severity::error, w.id, "thickness must be positive", w.thickness);
    if (!std::isfinite(w.current)) {
      emit(Severity::error, w.id, "current is not finite", w.current);
    } else if (w.width > 0.0 && w.thickness > 0.0) {
      const double j = std::abs(w.current) / (w.width * w.thickness);
      const auto per_cm2 = std::to_string(j * 1e-4);
      if (j > kCurrentDensityError)
        emit(Severity::error, w.id, "current density " + per_cm2 + " A/cm^2 exceeds 1e7 A/cm^2", j);
      else if (j > kCurrentDensityWarn)
        emit(Severity::warning, w.id, "current density " + per_cm2 + " A/cm^2 exceeds 1e6 A/cm^2", j);
    }
  }

  // Overlap of distinct wires sharing a conductor layer.
  for (std::size_t i = 0; i < layout.wires.size(); ++i) {
    for (std::size_t k = i + 1; k < layout.wires.size(); ++k) {
      const auto& wa = layout.wires[i];
      const auto& wb = layout.wires[k];
      const double reach = 0.5 * (wa.width + wb.width);
      const double layer = 0.5 * (wa.thickness + wb.thickness);
      double closest = std::numeric_limits<double>::infinity();
      for (std::size_t s = 1; s < wa.path.size(); ++s) {
        if (!is_planar(wa.path[s - 1], wa.path[s])) continue;
        for (std::size_t t = 1; t < wb.path.size(); ++t) {
          if (!is_planar(wb.path[t - 1], wb.path[t])) continue;
          if (std::abs(wa.path[s].z() - wb.path[t].z()) >= layer) continue;
          closest = std::min(closest, segment_distance_2d(wa.path[s - 1], wa.path[s], wb.path[t - 1], wb.path[t]));
        }
      }
      if (closest < reach)
        emit(Severity::error, wa.id, "overlaps wire '" + wb.id + "' in the same layer", closest);
    }
  }
  return report;
}

ChipLayout resolve_layout(const std::string& spec) {
  constexpr std::string_view prefix = "builtin:";
  if (spec.rfind(prefix, 0) == 0) return builtin_layout(std::string_view(spec).substr(prefix.size()));
  return load_layout(spec);
}

}  // namespace atomchip
