#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "atomchip/magnetostatics.hpp"
#include "atomchip/quantities.hpp"
#include "atomchip/sequences.hpp"
#include "atomchip/trapshop.hpp"

namespace atomchip {

enum class LossCause { surface, depth_escape, domain_exit };
const char* to_string(LossCause c);

struct AtomState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  bool alive = true;
  std::optional<LossCause> loss_cause;
};

struct Ensemble {
  std::vector<AtomState> atoms;
  AtomSpecies species;
  std::uint64_t seed = 0;
};

// Gaussian mode: Boltzmann distribution of the local harmonic approximation,
// positions spread along the curvature eigenaxes. Throws RegimeMismatch for a
// linear-quadrupole trap. Atom i draws from mt19937_64(seed + i).
Ensemble sample_thermal(const TrapCharacterization& trap, const PotentialModel& model, double temperature,
                        std::size_t count, std::uint64_t seed);

// Rejection mode: positions uniform in `region`, accepted with probability
// exp(-(V - V_min) / kT) against the true potential; works for any regime.
Ensemble sample_thermal(const FieldSource& source, const PotentialModel& model, const Box& region,
                        double temperature, std::size_t count, std::uint64_t seed);

struct IntegratorConfig {
  double dt = 0.0;  // s
  std::optional<Box> domain;  // defaults to the tracked trap positions +- 2 mm, clipped at the surface
  bool gravity = false;
  int output_stride = 100;  // steps between recorded frames
  FilamentPolicy filaments = FilamentPolicy::thin_wire();
  int threads = 0;  // 0: ATOMCHIP_THREADS or hardware concurrency
  int track_points = 61;  // trajectory samples used for the f_max check
};

struct Frame {
  double t = 0.0;
  std::vector<AtomState> atoms;
};

struct SimResult {
  std::vector<Frame> frames;
  AtomSpecies species;
  std::uint64_t seed = 0;
  double dt = 0.0;        // step actually used (duration / steps)
  long long steps = 0;
  double max_frequency = 0.0;  // Hz, along the tracked trajectory
  Box domain;
  std::vector<std::string> diagnostics;
};

// Velocity Verlet in the potential mu'|B(p, t)| of the instantiated sequence.
// Throws TimestepTooLarge when dt > 1 / (50 f_max). Atoms are lost on surface
// contact, on leaving the domain, or when V > mu'|B_bias| while moving uphill.
SimResult integrate(const Ensemble& ensemble, const Sequence& seq, const PotentialModel& model,
                    const IntegratorConfig& config);

// Largest trap frequency over a tracked sequence, NaN-free; 0 if none is harmonic.
double max_trap_frequency(const Sequence& seq, const PotentialModel& model, const FilamentPolicy& filaments,
                          int points);

// Kinetic plus potential energy of one atom.
double atom_energy(const AtomState& a, const FieldSource& source, const PotentialModel& model, bool gravity = false);

struct Observables {
  std::vector<double> t;
  std::vector<std::size_t> alive;
  std::vector<Vec3> temperature;     // K, m Var(v_i) / kB per lab axis
  std::vector<double> temperature_mean;  // K, (m / kB) det(Cov v)^(1/3), rotation invariant
  std::vector<double> retained_fraction;
  std::vector<Vec3> rms_size;        // m
  std::vector<double> density_proxy; // N_alive / (rms_x rms_y rms_z), 1/m^3
};

// Statistics of alive atoms per frame, summed in atom order. Frames with
// fewer than two alive atoms report NaN.
Observables observables(const SimResult& result);

// "t,N_alive,T_x,T_y,T_z,rms_x,rms_y,rms_z,density_proxy"
void write_observables_csv(std::ostream& out, const Observables& obs);
// "t,atom_id,x,y,z,vx,vy,vz,alive"
void write_dump_csv(std::ostream& out, const SimResult& result);

// Worker count: ATOMCHIP_THREADS when set and positive, else hardware concurrency.
int worker_count(int requested = 0);

}  // namespace atomchip
