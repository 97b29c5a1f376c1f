#pragma once

#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace atomchip {

// Positions in meters, fields in tesla; which one is meant is clear from context.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Frozen constant table. Everything internal is SI.
struct PhysicalConstants {
  static constexpr double mu0 = 4.0e-7 * std::numbers::pi;  // T m / A, exact here
  static constexpr double muB = 9.2740100783e-24;           // J / T
  static constexpr double h = 6.62607015e-34;               // J s
  static constexpr double hbar = h / (2.0 * std::numbers::pi);
  static constexpr double kB = 1.380649e-23;                // J / K
  static constexpr double amu = 1.66053906660e-27;          // kg
  static constexpr double mass_li7 = 7.0160034366 * amu;    // kg
  static constexpr double g = 9.80665;                      // m / s^2
};

// Internal state of one atom. The magnetic moment that matters for trapping is
// m_F * g_F * muB; m_F * g_F > 0 means low-field seeking.
struct AtomSpecies {
  double mass = PhysicalConstants::mass_li7;
  double g_F = 0.5;
  int m_F = 2;
  std::string label = "Li7 |F=2,mF=2>";

  double moment_factor() const { return g_F * m_F; }
  bool low_field_seeker() const { return moment_factor() > 0.0; }
};

// Presets for the three 7Li ground-state sublevels used in the loading
// experiments. The hyperfine Lande factors g_F = +1/2 (F=2) and -1/2 (F=1) are
// standard atomic-structure values for alkali ground states with I = 3/2.
namespace species {
AtomSpecies li7_f2_mf2();
AtomSpecies li7_f2_mf1();
AtomSpecies li7_f1_mfm1();
std::vector<AtomSpecies> li7_presets();
// Accepts "li7-f2-mf2", "li7-f2-mf1", "li7-f1-mf-1"; throws std::invalid_argument.
AtomSpecies by_name(std::string_view name);
}  // namespace species

class Energy {
 public:
  constexpr Energy() = default;
  constexpr explicit Energy(double joules) : joules_(joules) {}

  static constexpr Energy from_hertz(double hz) { return Energy(hz * PhysicalConstants::h); }
  static constexpr Energy from_kelvin(double kelvin) { return Energy(kelvin * PhysicalConstants::kB); }

  constexpr double joules() const { return joules_; }
  constexpr double hertz() const { return joules_ / PhysicalConstants::h; }
  constexpr double kelvin() const { return joules_ / PhysicalConstants::kB; }

  constexpr Energy operator*(double s) const { return Energy(joules_ * s); }
  constexpr Energy operator+(Energy o) const { return Energy(joules_ + o.joules_); }
  constexpr Energy operator-(Energy o) const { return Energy(joules_ - o.joules_); }
  constexpr auto operator<=>(const Energy&) const = default;

 private:
  double joules_ = 0.0;
};

struct EnergyViews {
  double joules;
  double frequency_MHz;
  double temperature_mK;
};

EnergyViews energy_views(Energy e);

// Unit conversion between tags of the same dimension. Supported simple tags:
// A mA | T G kG mG | m cm mm um nm (also "μm", "µm") | K mK uK | Hz kHz MHz |
// s ms us | J. A ratio "a/b" of two simple tags is accepted as well, e.g.
// "kG/cm" to "T/m". Throws UnknownUnit or IncompatibleUnits.
double convert(double value, std::string_view from_unit, std::string_view to_unit);

// Scale of `unit` relative to the SI unit of its dimension, e.g. "mA" -> 1e-3.
double si_scale(std::string_view unit);

// Dimension name ("current", "length", ...) of a tag, for diagnostics.
std::string dimension_of(std::string_view unit);

}  // namespace atomchip
