#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "atomchip/layout.hpp"
#include "atomchip/magnetostatics.hpp"
#include "atomchip/quantities.hpp"

namespace atomchip {

// V = mu' |B| with mu' = m_F g_F muB, valid while the spin follows the field.
struct PotentialModel {
  AtomSpecies species;
  double effective_moment;  // J/T

  // Throws std::invalid_argument unless the species is low-field seeking.
  explicit PotentialModel(AtomSpecies s);

  double mass() const { return species.mass; }
  Energy at(const Vec3& B) const { return Energy(effective_moment * B.norm()); }
};

Energy potential(const PotentialModel& model, const FieldSource& source, const Vec3& p);
Energy potential(const PotentialModel& model, const ChipLayout& layout, const Vec3& p);

// Trap depth set by the bias alone: |m_F g_F| muB |B_bias|.
Energy depth_from_bias(double bias_magnitude, const PotentialModel& model);

struct MinimizationConfig {
  std::vector<Vec3> seeds;
  // When set, also seeds a seed_grid over this box; it is the search domain as well.
  std::optional<Box> region;
  std::array<int, 3> seed_grid{5, 5, 5};
  double position_tolerance = 1e-9;  // m
  int max_iterations = 200;
  double epsilon_B = kDefaultEpsilonB;
  // Iterates leaving this box raise EscapedDomain. Defaults to `region`, or
  // to a 10 mm box around the seeds.
  std::optional<Box> domain;
};

// Result of a single descent, before multistart selection.
struct MinimumResult {
  Vec3 position;
  double B = 0.0;
  int iterations = 0;
};

// Modified Newton descent on |B|^2 from one seed.
MinimumResult descend(const FieldSource& source, const Vec3& seed, const Box& domain, const MinimizationConfig& config);

// Multistart over seeds. Throws NoConvergence or EscapedDomain when no seed
// produces a minimum.
Vec3 find_minimum(const PotentialModel& model, const FieldSource& source, const MinimizationConfig& config);
Vec3 find_minimum(const PotentialModel& model, const ChipLayout& layout, const MinimizationConfig& config);

Box search_domain(const MinimizationConfig& config, double surface_z);
std::vector<Vec3> seed_points(const MinimizationConfig& config);

enum class Regime { harmonic, linear_quadrupole };
const char* to_string(Regime r);

struct EigenPair {
  double value;
  Vec3 axis;
};

struct DepthOptions {
  int grid = 64;          // nodes per non-degenerate axis
  bool refine = true;     // one doubling, accepted when the change is < 2%
  double refine_tolerance = 0.02;
};

struct DepthResult {
  Energy barrier;
  int grid = 0;           // nodes per axis of the grid that produced `barrier`
  bool converged = false; // refinement changed the barrier by < tolerance
  Vec3 saddle;            // grid node where the escape path crosses the barrier level
};

// Barrier of the sublevel set around p*: the lowest level at which p*
// connects to a face of `region` or to the chip surface, minus V(p*). Axes of
// zero extent are not gridded, which turns the search into a slice. Throws
// NoBarrier when p* is connected to an escape node at V(p*).
DepthResult depth_numeric(const PotentialModel& model, const FieldSource& source, const Vec3& p_star,
                          const Box& region, const DepthOptions& options = {});

struct TrapCharacterization {
  Vec3 position;
  double B_min = 0.0;                         // T
  std::array<EigenPair, 3> grad_eigen;        // of dB_i/dx_j, ascending, T/m
  std::optional<std::array<EigenPair, 3>> curvature_eigen;  // Hessian of |B|, ascending, T/m^2
  std::optional<std::array<double, 3>> frequencies;         // Hz, NaN for axes with negative curvature
  std::optional<std::array<double, 3>> ground_state_sizes;  // m, NaN likewise
  Energy depth_bias;
  std::optional<Energy> depth_numeric;
  double larmor_frequency = 0.0;  // Hz
  std::optional<double> adiabaticity;
  Regime regime = Regime::linear_quadrupole;
  std::vector<std::string> diagnostics;

  // Largest |gradient eigenvalue|: the transverse gradient of a guide or quadrupole.
  double gradient() const;
  // Geometric mean of the available frequencies; NaN outside the harmonic regime.
  double mean_frequency() const;
  double max_frequency() const;
  double height(double surface_z = 0.0) const { return position.z() - surface_z; }
};

struct CharacterizeOptions {
  double epsilon_B = kDefaultEpsilonB;
  double position_tolerance = 1e-9;
  std::optional<Box> depth_region;  // depth_numeric is computed only when set
  DepthOptions depth;
};

// Throws NotAMinimum when a Newton step from p* on |B|^2 exceeds
// 10 x position_tolerance.
TrapCharacterization characterize(const PotentialModel& model, const FieldSource& source, const Vec3& p_star,
                                  const CharacterizeOptions& options = {});
TrapCharacterization characterize(const PotentialModel& model, const ChipLayout& layout, const Vec3& p_star,
                                  const CharacterizeOptions& options = {});

double ground_state_size(double frequency_hz, double mass);

// `key = value # unit` lines covering every field.
void write_characterization(std::ostream& out, const TrapCharacterization& c);

}  // namespace atomchip
