#include "atomchip/quantities.hpp"

#include <array>
#include <stdexcept>

#include "atomchip/errors.hpp"

namespace atomchip {

namespace species {

AtomSpecies li7_f2_mf2() { return {PhysicalConstants::mass_li7, 0.5, 2, "Li7 |F=2,mF=2>"}; }
AtomSpecies li7_f2_mf1() { return {PhysicalConstants::mass_li7, 0.5, 1, "Li7 |F=2,mF=1>"}; }
AtomSpecies li7_f1_mfm1() { return {PhysicalConstants::mass_li7, -0.5, -1, "Li7 |F=1,mF=-1>"}; }

std::vector<AtomSpecies> li7_presets() { return {li7_f2_mf2(), li7_f2_mf1(), li7_f1_mfm1()}; }

AtomSpecies by_name(std::string_view name) {
  if (name == "li7-f2-mf2") return li7_f2_mf2();
  if (name == "li7-f2-mf1") return li7_f2_mf1();
  if (name == "li7-f1-mf-1" || name == "li7-f1-mfm1") return li7_f1_mfm1();
  throw std::invalid_argument("unknown species '" + std::string(name) +
                              "' (expected li7-f2-mf2, li7-f2-mf1, li7-f1-mf-1)");
}

}  // namespace species

EnergyViews energy_views(Energy e) {
  return {e.joules(), e.hertz() * 1e-6, e.kelvin() * 1e3};
}

namespace {

struct UnitEntry {
  std::string_view tag;
  std::string_view dimension;
  double scale;
};

constexpr std::array kUnits{
    UnitEntry{"A", "current", 1.0},
    UnitEntry{"mA", "current", 1e-3},
    UnitEntry{"T", "field", 1.0},
    UnitEntry{"G", "field", 1e-4},
    UnitEntry{"kG", "field", 1e-1},
    UnitEntry{"mG", "field", 1e-7},
    UnitEntry{"m", "length", 1.0},
    UnitEntry{"cm", "length", 1e-2},
    UnitEntry{"mm", "length", 1e-3},
    UnitEntry{"um", "length", 1e-6},
    UnitEntry{"μm", "length", 1e-6},
    UnitEntry{"µm", "length", 1e-6},
    UnitEntry{"nm", "length", 1e-9},
    UnitEntry{"K", "temperature", 1.0},
    UnitEntry{"mK", "temperature", 1e-3},
    UnitEntry{"uK", "temperature", 1e-6},
    UnitEntry{"μK", "temperature", 1e-6},
    UnitEntry{"µK", "temperature", 1e-6},
    UnitEntry{"Hz", "frequency", 1.0},
    UnitEntry{"kHz", "frequency", 1e3},
    UnitEntry{"MHz", "frequency", 1e6},
    UnitEntry{"s", "time", 1.0},
    UnitEntry{"ms", "time", 1e-3},
    UnitEntry{"us", "time", 1e-6},
    UnitEntry{"μs", "time", 1e-6},
    UnitEntry{"µs", "time", 1e-6},
    UnitEntry{"J", "energy", 1.0},
};

const UnitEntry& lookup(std::string_view tag) {
  for (const auto& u : kUnits)
    if (u.tag == tag) return u;
  throw UnknownUnit("unknown unit '" + std::string(tag) + "'");
}

struct Resolved {
  std::string dimension;
  double scale;
};

Resolved resolve(std::string_view unit) {
  const auto slash = unit.find('/');
  if (slash == std::string_view::npos) {
    const auto& e = lookup(unit);
    return {std::string(e.dimension), e.scale};
  }
  const auto& num = lookup(unit.substr(0, slash));
  const auto& den = lookup(unit.substr(slash + 1));
  return {std::string(num.dimension) + "/" + std::string(den.dimension), num.scale / den.scale};
}

}  // namespace

double si_scale(std::string_view unit) { return resolve(unit).scale; }

std::string dimension_of(std::string_view unit) { return resolve(unit).dimension; }

double convert(double value, std::string_view from_unit, std::string_view to_unit) {
  const auto from = resolve(from_unit);
  const auto to = resolve(to_unit);
  if (from.dimension != to.dimension)
    throw IncompatibleUnits("cannot convert " + std::string(from_unit) + " (" + from.dimension +
                            ") to " + std::string(to_unit) + " (" + to.dimension + ")");
  if (from.scale == to.scale) return value;
  return value * (from.scale / to.scale);
}

}  // namespace atomchip
