#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <vector>

#include "atomchip/layout.hpp"
#include "atomchip/quantities.hpp"

namespace atomchip {

// Straight current element from a to b.
struct Filament {
  Vec3 a;
  Vec3 b;
  double current = 0.0;  // A
};

// Semi-infinite straight conductor starting at `origin` and running to
// infinity along the unit vector `direction`. Positive current flows away
// from the origin.
struct Lead {
  Vec3 origin;
  Vec3 direction;
  double current = 0.0;
};

// Closed-form Biot-Savart field of a finite segment and its analytic
// Jacobian dB_i/dx_j. Throw OnConductor within 1e-12 m of the segment.
Vec3 segment_field(const Vec3& p, const Filament& f);
Vec3 segment_field(const Vec3& p, const Filament& f, Mat3& jacobian);

Vec3 lead_field(const Vec3& p, const Lead& l);
Vec3 lead_field(const Vec3& p, const Lead& l, Mat3& jacobian);

// Euclidean distance from p to the segment [a, b].
double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

inline constexpr double kOnConductorTolerance = 1e-12;  // m

// `n` parallel filaments spread uniformly over the width, centered on the
// path. Offsets are mitered at corners so each filament stays parallel to the
// centerline. Each filament carries current / n.
std::vector<Filament> decompose(const Wire& wire, int n);

// Everything a wire contributes at unit current: filaments over the width and
// `layers` sheets over the thickness, plus the feed leads. Open paths are fed
// at both ends by leads running straight down (-z) into the substrate, so
// current is conserved everywhere and the field is exactly curl free. Closed
// paths have no leads.
struct FilamentSet {
  std::vector<Filament> filaments;
  std::vector<Lead> leads;
};

FilamentSet decompose_wire(const Wire& wire, int n, int layers = 1);

// n = 0 selects the count automatically: start at 16 and double until the
// field at probe points above the wire (heights w/2, w, 2w over each segment
// midpoint) changes by less than 1e-3 relative, capped at 256.
struct FilamentPolicy {
  int n = 0;
  int layers = 1;

  static FilamentPolicy thin_wire() { return {1, 1}; }
};

inline constexpr int kAutoFilamentStart = 16;
inline constexpr int kAutoFilamentCap = 256;
inline constexpr double kAutoFilamentTolerance = 1e-3;

int auto_filament_count(const Wire& wire, int layers = 1);

struct FieldJet {
  Vec3 B;
  Mat3 J;  // dB_i/dx_j, T/m
};

// Anything that can report a static magnetic field with derivatives.
class FieldSource {
 public:
  virtual ~FieldSource() = default;

  virtual FieldJet jet(const Vec3& p) const = 0;
  virtual Vec3 field(const Vec3& p) const { return jet(p).B; }
  // Distance to the nearest current element, used to size finite-difference steps.
  virtual double conductor_distance(const Vec3& p) const = 0;
  virtual double surface_z() const { return 0.0; }
  // Uniform part of the field, which sets the trap depth.
  virtual Vec3 bias() const { return Vec3::Zero(); }
};

// Field of a ChipLayout: bias plus the superposed filament fields of every
// wire. Geometry is decomposed once; currents and bias can be changed later
// without re-decomposing.
class FieldModel : public FieldSource {
 public:
  explicit FieldModel(const ChipLayout& layout, FilamentPolicy policy = {});

  FieldJet jet(const Vec3& p) const override;
  Vec3 field(const Vec3& p) const override;
  double conductor_distance(const Vec3& p) const override;
  double surface_z() const override { return surface_z_; }

  // Takes currents and bias from a layout with the same wire ids (for
  // example the same base layout at another point of a sequence).
  void update(const ChipLayout& layout);
  void set_current(std::string_view wire_id, double current);
  void set_bias(const Vec3& bias) { bias_ = bias; }

  Vec3 bias() const override { return bias_; }
  const std::vector<double>& currents() const { return currents_; }
  const std::vector<int>& filament_counts() const { return counts_; }

 private:
  std::vector<std::string> ids_;
  std::vector<FilamentSet> sets_;  // unit current per wire
  std::vector<int> counts_;
  std::vector<double> currents_;
  Vec3 bias_ = Vec3::Zero();
  double surface_z_ = 0.0;
};

Vec3 total_field(const ChipLayout& layout, const Vec3& p, FilamentPolicy policy = {});
Mat3 field_jacobian(const ChipLayout& layout, const Vec3& p, FilamentPolicy policy = {});

// Gradient of |B|. Requires |B| > 0.
Vec3 magnitude_gradient(const FieldJet& jet);

inline constexpr double kDefaultEpsilonB = 1e-6;  // T (10 mG)

// Hessian of |B| from central differences of the analytic gradient, step
// max(1 nm, 1e-4 * conductor distance), symmetrized. Throws
// DegenerateMagnitude when |B(p)| <= epsilon_B.
Mat3 magnitude_hessian(const FieldSource& source, const Vec3& p, double epsilon_B = kDefaultEpsilonB);
Mat3 magnitude_hessian(const ChipLayout& layout, const Vec3& p, double epsilon_B = kDefaultEpsilonB);

struct Box {
  Vec3 lo;
  Vec3 hi;

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
};

struct FieldSample {
  Vec3 point;
  Vec3 B;
  std::optional<Mat3> jacobian;
  bool valid = true;  // false when the point lies on a conductor; B is NaN then
};

// Samples on a regular grid, x outermost and z innermost. A count of 1 on an
// axis samples the midpoint of that axis.
std::vector<FieldSample> grid_map(const FieldSource& source, const Box& region, std::array<int, 3> resolution,
                                  bool with_jacobian = false);
std::vector<FieldSample> grid_map(const ChipLayout& layout, const Box& region, std::array<int, 3> resolution,
                                  bool with_jacobian = false);

Vec3 grid_point(const Box& region, std::array<int, 3> resolution, std::array<int, 3> index);

// "x,y,z,Bx,By,Bz,Bnorm" with 17 significant digits.
void write_grid_csv(std::ostream& out, const std::vector<FieldSample>& samples);

}  // namespace atomchip
