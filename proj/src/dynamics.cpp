#include "atomchip/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "atomchip/errors.hpp"

namespace atomchip {

namespace {

using C = PhysicalConstants;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> sample_times(const Sequence& seq, int points) {
  std::vector<double> ts;
  const int n = std::max(points, 2);
  for (int i = 0; i < n; ++i) ts.push_back(seq.duration * i / (n - 1));
  for (const auto& r : seq.ramps)
    for (const auto& [t, v] : r.points)
      if (t >= 0.0 && t <= seq.duration) ts.push_back(t);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

TrapTrajectory track_for_dynamics(const Sequence& seq, const PotentialModel& model, const FilamentPolicy& filaments,
                                  int points) {
  TrackConfig tc;
  tc.filaments = filaments;
  return track(seq, sample_times(seq, points), model, tc);
}

double trajectory_fmax(const TrapTrajectory& traj) {
  double fmax = 0.0;
  for (const auto& e : traj.entries)
    if (e) {
      const double f = e->max_frequency();
      if (std::isfinite(f)) fmax = std::max(fmax, f);
    }
  return fmax;
}

Vec3 acceleration(const FieldJet& jet, double moment_over_mass, bool gravity) {
  Vec3 a = Vec3::Zero();
  const double B = jet.B.norm();
  if (B > 0.0) a = -moment_over_mass * (jet.J.transpose() * jet.B) / B;
  if (gravity) a.z() -= C::g;
  return a;
}

struct WorkerOutput {
  std::vector<std::string> diagnostics;
};

}  // namespace

const char* to_string(LossCause c) {
  switch (c) {
    case LossCause::surface: return "surface";
    case LossCause::depth_escape: return "depth-escape";
    case LossCause::domain_exit: return "domain-exit";
  }
  return "?";
}

Ensemble sample_thermal(const TrapCharacterization& trap, const PotentialModel& model, double temperature,
                        std::size_t count, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (trap.regime != Regime::harmonic || !trap.curvature_eigen || !trap.frequencies)
    throw RegimeMismatch("Gaussian sampling needs a harmonic trap");
  for (double f : *trap.frequencies)
    if (!(f > 0.0)) throw RegimeMismatch("Gaussian sampling needs positive curvature on every axis");

  const double m = model.mass();
  const double sigma_v = std::sqrt(C::kB * temperature / m);
  std::array<double, 3> sigma_x;
  for (int i = 0; i < 3; ++i) sigma_x[i] = sigma_v / (kTwoPi * (*trap.frequencies)[i]);

  Ensemble e;
  e.species = model.species;
  e.seed = seed;
  e.atoms.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::mt19937_64 rng(seed + n);
    std::normal_distribution<double> normal(0.0, 1.0);
    AtomState& a = e.atoms[n];
    a.position = trap.position;
    for (int i = 0; i < 3; ++i) a.position += sigma_x[i] * normal(rng) * (*trap.curvature_eigen)[i].axis;
    for (int i = 0; i < 3; ++i) a.velocity[i] = sigma_v * normal(rng);
  }
  return e;
}

Ensemble sample_thermal(const FieldSource& source, const PotentialModel& model, const Box& region,
                        double temperature, std::size_t count, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");

  // Reference energy: the minimum inside the region, from a search when it
  // converges and from a coarse grid otherwise.
  double v_ref = std::numeric_limits<double>::infinity();
  for (const auto& s : grid_map(source, region, {16, 16, 16}))
    if (s.valid && s.point.z() > source.surface_z()) v_ref = std::min(v_ref, model.at(s.B).joules());
  try {
    MinimizationConfig mc;
    mc.region = region;
    const Vec3 p = find_minimum(model, source, mc);
    v_ref = std::min(v_ref, potential(model, source, p).joules());
  } catch (const Error&) {
  }
  if (!std::isfinite(v_ref)) throw NoConvergence("no valid sample point in the sampling region");

  const double kT = C::kB * temperature;
  const double sigma_v = std::sqrt(kT / model.mass());
  constexpr long kMaxAttempts = 10'000'000;

  Ensemble e;
  e.species = model.species;
  e.seed = seed;
  e.atoms.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::mt19937_64 rng(seed + n);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    AtomState& a = e.atoms[n];
    bool accepted = false;
    for (long k = 0; k < kMaxAttempts && !accepted; ++k) {
      Vec3 p;
      for (int i = 0; i < 3; ++i) p[i] = region.lo[i] + uniform(rng) * (region.hi[i] - region.lo[i]);
      const double u = uniform(rng);
      if (p.z() <= source.surface_z()) continue;
      double v;
      try {
        v = model.at(source.field(p)).joules();
      } catch (const OnConductor&) {
        continue;
      }
      if (u < std::exp(-(v - v_ref) / kT)) {
        a.position = p;
        accepted = true;
      }
    }
    if (!accepted) throw NoConvergence("rejection sampling found no accepted point; region too large for T");
    for (int i = 0; i < 3; ++i) a.velocity[i] = sigma_v * normal(rng);
  }
  return e;
}

double max_trap_frequency(const Sequence& seq, const PotentialModel& model, const FilamentPolicy& filaments,
                          int points) {
  return trajectory_fmax(track_for_dynamics(seq, model, filaments, points));
}

double atom_energy(const AtomState& a, const FieldSource& source, const PotentialModel& model, bool gravity) {
  double e = 0.5 * model.mass() * a.velocity.squaredNorm() + model.at(source.field(a.position)).joules();
  if (gravity) e += model.mass() * C::g * a.position.z();
  return e;
}

int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ATOMCHIP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(n, 1);
}

SimResult integrate(const Ensemble& ensemble, const Sequence& seq, const PotentialModel& model,
                    const IntegratorConfig& config) {
  if (!(config.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (config.output_stride < 1) throw std::invalid_argument("output_stride must be at least 1");
  check_sequence(seq);

  SimResult result;
  result.species = ensemble.species;
  result.seed = ensemble.seed;

  const TrapTrajectory traj = track_for_dynamics(seq, model, config.filaments, config.track_points);
  result.max_frequency = trajectory_fmax(traj);
  if (result.max_frequency > 0.0) {
    const double limit = 1.0 / (50.0 * result.max_frequency);
    if (config.dt > limit) {
      std::ostringstream m;
      m << "dt = " << config.dt << " s exceeds 1/(50 f_max) = " << limit << " s (f_max = " << result.max_frequency
        << " Hz)";
      throw TimestepTooLarge(m.str());
    }
  } else {
    result.diagnostics.push_back("no harmonic trap along the sequence; timestep not checked against f_max");
  }

  const double surface = seq.base_layout.surface_z;
  if (config.domain) {
    result.domain = *config.domain;
  } else {
    constexpr double margin = 2e-3;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    auto grow = [&](const Vec3& p) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    };
    for (const auto& e : traj.entries)
      if (e) grow(e->position);
    for (const auto& a : ensemble.atoms) grow(a.position);
    if (!std::isfinite(lo.x())) throw std::invalid_argument("no trap and no atoms to size the domain");
    result.domain = {lo.array() - margin, hi.array() + margin};
    result.domain.lo.z() = std::max(result.domain.lo.z(), surface);
  }
  for (const auto& a : ensemble.atoms)
    if (a.alive && !result.domain.contains(a.position))
      throw std::invalid_argument("integration domain does not contain every initial position");

  const long long n_steps =
      seq.duration > 0.0 ? static_cast<long long>(std::ceil(seq.duration / config.dt * (1.0 - 1e-12))) : 0;
  result.steps = n_steps;
  result.dt = n_steps > 0 ? seq.duration / static_cast<double>(n_steps) : config.dt;
  auto time_at = [&](long long k) { return n_steps > 0 ? seq.duration * static_cast<double>(k) / n_steps : 0.0; };

  std::vector<long long> frame_steps;
  for (long long k = 0; k <= n_steps; k += config.output_stride) frame_steps.push_back(k);
  if (frame_steps.back() != n_steps) frame_steps.push_back(n_steps);
  result.frames.resize(frame_steps.size());
  for (std::size_t f = 0; f < frame_steps.size(); ++f) {
    result.frames[f].t = time_at(frame_steps[f]);
    result.frames[f].atoms.resize(ensemble.atoms.size());
  }

  const FieldModel prototype(seq.base_layout, config.filaments);
  const double mu = model.effective_moment;
  const double mu_over_m = mu / model.mass();
  const double h = result.dt;
  const Box domain = result.domain;
  const std::size_t n_atoms = ensemble.atoms.size();
  const int n_workers = static_cast<int>(std::min<std::size_t>(worker_count(config.threads), std::max<std::size_t>(n_atoms, 1)));
  std::vector<WorkerOutput> outputs(n_workers);

  auto run_chunk = [&](int w) {
    const std::size_t begin = n_atoms * w / n_workers;
    const std::size_t end = n_atoms * (w + 1) / n_workers;
    if (begin == end) return;
    FieldModel field = prototype;
    std::vector<AtomState> atoms(ensemble.atoms.begin() + begin, ensemble.atoms.begin() + end);
    std::vector<Vec3> acc(atoms.size(), Vec3::Zero());
    auto& diag = outputs[w].diagnostics;

    auto lose = [&](std::size_t i, LossCause c) {
      atoms[i].alive = false;
      atoms[i].loss_cause = c;
    };

    field.update(instantiate(seq, 0.0));
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (!atoms[i].alive) continue;
      try {
        acc[i] = acceleration(field.jet(atoms[i].position), mu_over_m, config.gravity);
      } catch (const Error& e) {
        diag.push_back("atom " + std::to_string(begin + i) + ": " + e.what());
        lose(i, LossCause::domain_exit);
      }
    }

    std::size_t next_frame = 0;
    auto record = [&](long long k) {
      if (next_frame < frame_steps.size() && frame_steps[next_frame] == k) {
        auto& dst = result.frames[next_frame].atoms;
        std::copy(atoms.begin(), atoms.end(), dst.begin() + begin);
        ++next_frame;
      }
    };
    record(0);

    for (long long k = 1; k <= n_steps; ++k) {
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (!atoms[i].alive) continue;
        atoms[i].position += h * atoms[i].velocity + 0.5 * h * h * acc[i];
      }
      field.update(instantiate(seq, time_at(k)));
      const double depth = mu * field.bias().norm();
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        AtomState& a = atoms[i];
        if (!a.alive) continue;
        if (a.position.z() <= surface) {
          lose(i, LossCause::surface);
          continue;
        }
        if (!domain.contains(a.position)) {
          lose(i, LossCause::domain_exit);
          continue;
        }
        FieldJet jet;
        try {
          jet = field.jet(a.position);
        } catch (const Error& e) {
          diag.push_back("atom " + std::to_string(begin + i) + ": " + e.what());
          lose(i, LossCause::domain_exit);
          continue;
        }
        const Vec3 a_new = acceleration(jet, mu_over_m, config.gravity);
        a.velocity += 0.5 * h * (acc[i] + a_new);
        acc[i] = a_new;
        const double B = jet.B.norm();
        if (mu * B > depth && B > 0.0) {
          const Vec3 grad_v = mu * (jet.J.transpose() * jet.B) / B;
          if (grad_v.dot(a.velocity) > 0.0) lose(i, LossCause::depth_escape);
        }
      }
      record(k);
    }
  };

  if (n_workers == 1) {
    run_chunk(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(run_chunk, w);
    for (auto& t : pool) t.join();
  }
  for (auto& o : outputs)
    result.diagnostics.insert(result.diagnostics.end(), o.diagnostics.begin(), o.diagnostics.end());
  return result;
}

Observables observables(const SimResult& result) {
  if (result.frames.empty()) throw std::invalid_argument("simulation result has no frames");
  Observables o;
  const double m = result.species.mass;
  const double n0 = static_cast<double>(result.frames.front().atoms.size());
  for (const auto& f : result.frames) {
    std::size_t n = 0;
    Vec3 mean_x = Vec3::Zero(), mean_v = Vec3::Zero();
    for (const auto& a : f.atoms)
      if (a.alive) {
        ++n;
        mean_x += a.position;
        mean_v += a.velocity;
      }
    o.t.push_back(f.t);
    o.alive.push_back(n);
    o.retained_fraction.push_back(n0 > 0 ? n / n0 : kNaN);
    if (n < 2) {
      o.temperature.push_back(Vec3::Constant(kNaN));
      o.temperature_mean.push_back(kNaN);
      o.rms_size.push_back(Vec3::Constant(kNaN));
      o.density_proxy.push_back(kNaN);
      continue;
    }
    mean_x /= static_cast<double>(n);
    mean_v /= static_cast<double>(n);
    Mat3 cov_v = Mat3::Zero();
    Vec3 var_x = Vec3::Zero();
    for (const auto& a : f.atoms)
      if (a.alive) {
        const Vec3 dv = a.velocity - mean_v;
        cov_v += dv * dv.transpose();
        var_x += (a.position - mean_x).cwiseAbs2();
      }
    cov_v /= static_cast<double>(n);
    var_x /= static_cast<double>(n);
    o.temperature.push_back(m / C::kB * cov_v.diagonal());
    const double det = cov_v.determinant();
    o.temperature_mean.push_back(det > 0.0 ? m / C::kB * std::cbrt(det) : kNaN);
    const Vec3 rms = var_x.cwiseSqrt();
    o.rms_size.push_back(rms);
    o.density_proxy.push_back(static_cast<double>(n) / (rms.x() * rms.y() * rms.z()));
  }
  return o;
}

void write_observables_csv(std::ostream& out, const Observables& obs) {
  const auto old = out.precision(17);
  out << "t,N_alive,T_x,T_y,T_z,rms_x,rms_y,rms_z,density_proxy\n";
  for (std::size_t i = 0; i < obs.t.size(); ++i) {
    out << obs.t[i] << ',' << obs.alive[i];
    for (int k = 0; k < 3; ++k) out << ',' << obs.temperature[i][k];
    for (int k = 0; k < 3; ++k) out << ',' << obs.rms_size[i][k];
    out << ',' << obs.density_proxy[i] << '\n';
  }
  out.precision(old);
}

void write_dump_csv(std::ostream& out, const SimResult& result) {
  const auto old = out.precision(17);
  out << "t,atom_id,x,y,z,vx,vy,vz,alive\n";
  for (const auto& f : result.frames)
    for (std::size_t i = 0; i < f.atoms.size(); ++i) {
      const auto& a = f.atoms[i];
      out << f.t << ',' << i;
      for (int k = 0; k < 3; ++k) out << ',' << a.position[k];
      for (int k = 0; k < 3; ++k) out << ',' << a.velocity[k];
      out << ',' << (a.alive ? 1 : 0) << '\n';
    }
  out.precision(old);
}

}  // namespace atomchip
