#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "atomchip/layout.hpp"
#include "atomchip/magnetostatics.hpp"
#include "atomchip/trapshop.hpp"

namespace atomchip {

// Piecewise-linear ramp of one channel: a wire id (A) or "bias.x", "bias.y",
// "bias.z" (T). Before the first point and after the last the boundary value
// holds.
struct Ramp {
  std::string channel;
  std::vector<std::pair<double, double>> points;  // (s, A or T)

  double value_at(double t) const;
  double max_slope() const;
};

struct Sequence {
  std::string label;
  ChipLayout base_layout;
  std::vector<Ramp> ramps;
  double duration = 0.0;  // s
};

// Throws ParseError on a broken invariant: unsorted times, unknown channel,
// two ramps on one channel, duration shorter than a ramp.
void check_sequence(const Sequence& seq);

// Base layout with every ramped channel at its value at t. Throws
// TimeOutOfRange outside [0, duration].
ChipLayout instantiate(const Sequence& seq, double t);

// Same ramps with all times multiplied by `factor`.
Sequence time_scaled(const Sequence& seq, double factor);
// Played backwards: instantiate(reversed(s), t) == instantiate(s, duration - t).
Sequence reversed(const Sequence& seq);

// Stage durations are free parameters; 10 ms per stage unless overridden.
inline constexpr double kDefaultStageTime = 10e-3;

// fig4-transfer: stage (i) at t = 0, (ii) at T, (iii) at 2T, (iv) at 3T.
// fig3-loading: under-chip trap at 0, bias 19 G at T, chip U wires take over
// by 2T, thin wire on by 3T, U wires off by 4T.
// onchip-bias-demo: U currents antiparallel to the thin wire, no external bias.
Sequence builtin_sequence(std::string_view name, double stage_time = kDefaultStageTime);
std::vector<std::string> builtin_sequence_names();

// JSON: {base_layout, duration: {value, unit}, ramps: [{channel, points:
// [[t, v], ...], units: {t, value}}]}. base_layout is a path relative to the
// sequence file or "builtin:<name>".
Sequence parse_sequence(std::string_view text, const std::string& base_dir = ".");
Sequence load_sequence(const std::string& path);
Sequence resolve_sequence(const std::string& spec, double stage_time = kDefaultStageTime);

// Heights from 10 um to 5 mm above the origin.
std::vector<Vec3> default_seeds();

struct TrackConfig {
  MinimizationConfig minimization;  // used at the first time and as fallback
  CharacterizeOptions characterize;
  FilamentPolicy filaments;
  double jump_factor = 10.0;
};

struct TrapTrajectory {
  std::vector<double> times;
  std::vector<std::optional<TrapCharacterization>> entries;
  std::vector<std::string> diagnostics;

  // First and last present entries.
  const TrapCharacterization* first() const;
  const TrapCharacterization* last() const;
};

// Characterizes the trap at every time, seeding each search from the previous
// minimum. Failed searches become absent entries with a diagnostic. A step
// longer than jump_factor times both neighbouring steps (and over 1 um) is
// flagged as a discontinuity.
TrapTrajectory track(const Sequence& seq, const std::vector<double>& times, const PotentialModel& model,
                     const TrackConfig& config = {});

// "t,present,x,y,z,..." one row per time; absent entries leave fields empty.
void write_trajectory_csv(std::ostream& out, const TrapTrajectory& traj);

// harmonic: 3D harmonic adiabatic following, T_f = T_i w_f/w_i and density
// factor (w_f/w_i)^(3/2); requires harmonic endpoints.
// entropy: classical entropy conservation between endpoints that may each be
// harmonic or linear quadrupole; reduces to the harmonic law when both are.
enum class CompressionModel { harmonic, entropy };

struct CompressionReport {
  CompressionModel model = CompressionModel::harmonic;
  Regime initial_regime = Regime::harmonic;
  Regime final_regime = Regime::harmonic;
  double mean_frequency_initial = 0.0;  // Hz, NaN for a quadrupole endpoint
  double mean_frequency_final = 0.0;
  double temperature_initial = 0.0;  // K
  double temperature_final = 0.0;
  double temperature_factor = 0.0;
  double density_factor = 0.0;  // peak density ratio final / initial
  Energy depth_final;
  bool loss_risk = false;  // kB T_f > depth / 10
};

CompressionReport compression_report(const TrapCharacterization& initial, const TrapCharacterization& final,
                                     double initial_temperature, const PotentialModel& model,
                                     CompressionModel mode = CompressionModel::harmonic);
CompressionReport compression_report(const TrapTrajectory& traj, double initial_temperature,
                                     const PotentialModel& model, CompressionModel mode = CompressionModel::harmonic);

void write_compression_report(std::ostream& out, const CompressionReport& r);

}  // namespace atomchip
