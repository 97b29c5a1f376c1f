#include "atomchip/trapshop.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "atomchip/errors.hpp"

namespace atomchip {

using PC = PhysicalConstants;

PotentialModel::PotentialModel(AtomSpecies s) : species(std::move(s)), effective_moment(0.0) {
  if (!(species.mass > 0.0)) throw std::invalid_argument("species mass must be positive");
  effective_moment = species.moment_factor() * PC::muB;
  if (!(effective_moment > 0.0))
    throw std::invalid_argument("species '" + species.label + "' is not low-field seeking (m_F g_F <= 0)");
}

Energy potential(const PotentialModel& model, const FieldSource& source, const Vec3& p) {
  return model.at(source.field(p));
}

Energy potential(const PotentialModel& model, const ChipLayout& layout, const Vec3& p) {
  return potential(model, FieldModel(layout), p);
}

Energy depth_from_bias(double bias_magnitude, const PotentialModel& model) {
  if (!(bias_magnitude >= 0.0)) throw std::invalid_argument("bias magnitude must be non-negative");
  return Energy(std::abs(model.species.moment_factor()) * PC::muB * bias_magnitude);
}

const char* to_string(Regime r) { return r == Regime::harmonic ? "harmonic" : "linear-quadrupole"; }

namespace {

double fd_step(const FieldSource& source, const Vec3& p) {
  const double d = source.conductor_distance(p);
  return std::isfinite(d) ? std::max(1e-9, 1e-4 * d) : 1e-9;
}

Vec3 b2_gradient(const FieldJet& j) { return 2.0 * j.J.transpose() * j.B; }

// Hessian of |B|^2 by central differences of its analytic gradient.
Mat3 b2_hessian(const FieldSource& source, const Vec3& p) {
  const double h = fd_step(source, p);
  Mat3 H;
  for (int a = 0; a < 3; ++a) {
    Vec3 dp = Vec3::Zero();
    dp[a] = h;
    H.col(a) = (b2_gradient(source.jet(p + dp)) - b2_gradient(source.jet(p - dp))) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

// Newton step with |eigenvalue| in place of each eigenvalue. Directions whose
// curvature is below 1e-12 of the largest are left alone; they are flat to
// working precision. Returns nullopt when every direction is flat.
std::optional<Vec3> newton_step(const Mat3& H, const Vec3& g) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(H);
  const Vec3 lam = es.eigenvalues();
  const double lmax = lam.cwiseAbs().maxCoeff();
  if (!(lmax > 0.0)) return std::nullopt;
  Vec3 step = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    const double l = std::abs(lam[i]);
    if (l <= 1e-12 * lmax) continue;
    const Vec3 v = es.eigenvectors().col(i);
    step -= v.dot(g) / l * v;
  }
  return step;
}

bool inside(const Box& domain, double surface_z, const Vec3& p) { return domain.contains(p) && p.z() > surface_z; }

std::string fmt_point(const Vec3& p) {
  std::ostringstream s;
  s << std::setprecision(6) << "(" << p.x() << ", " << p.y() << ", " << p.z() << ")";
  return s.str();
}

}  // namespace

Box search_domain(const MinimizationConfig& config, double surface_z) {
  Box b;
  if (config.domain) {
    b = *config.domain;
  } else if (config.region) {
    b = *config.region;
  } else {
    if (config.seeds.empty()) throw std::invalid_argument("minimization needs seeds or a region");
    b.lo = b.hi = config.seeds.front();
    for (const auto& s : config.seeds) {
      b.lo = b.lo.cwiseMin(s);
      b.hi = b.hi.cwiseMax(s);
    }
    b.lo.array() -= 5e-3;
    b.hi.array() += 5e-3;
  }
  b.lo.z() = std::max(b.lo.z(), surface_z);
  return b;
}

std::vector<Vec3> seed_points(const MinimizationConfig& config) {
  std::vector<Vec3> seeds = config.seeds;
  if (config.region) {
    const auto& r = *config.region;
    const auto& n = config.seed_grid;
    for (int i = 0; i < n[0]; ++i)
      for (int j = 0; j < n[1]; ++j)
        for (int k = 0; k < n[2]; ++k) {
          const Vec3 f((i + 0.5) / n[0], (j + 0.5) / n[1], (k + 0.5) / n[2]);
          seeds.push_back(r.lo + f.cwiseProduct(r.extent()));
        }
  }
  return seeds;
}

MinimumResult descend(const FieldSource& source, const Vec3& seed, const Box& domain, const MinimizationConfig& config) {
  const double zs = source.surface_z();
  if (!inside(domain, zs, seed)) throw EscapedDomain("seed " + fmt_point(seed) + " is outside the search domain");
  const double span = domain.extent().maxCoeff();
  Vec3 p = seed;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const FieldJet j = source.jet(p);
    const double f0 = j.B.squaredNorm();
    const Vec3 g = b2_gradient(j);
    const auto step_opt = newton_step(b2_hessian(source, p), g);
    if (!step_opt) throw NoConvergence("potential is flat at " + fmt_point(p) + "; no minimum to descend to");
    Vec3 step = *step_opt;
    const double len = step.norm();
    if (len < config.position_tolerance) return {p + step, source.field(p + step).norm(), it};
    const double cap = std::min(0.5 * source.conductor_distance(p), 0.25 * (span > 0 ? span : 1.0));
    if (len > cap) step *= cap / len;
    // Armijo backtracking on |B|^2.
    const double slope = g.dot(step);
    double t = 1.0;
    bool accepted = false;
    Vec3 q;
    while (t * step.norm() > 0.1 * config.position_tolerance) {
      q = p + t * step;
      if (!inside(domain, zs, q))
        throw EscapedDomain("iterate " + fmt_point(q) + " left the search domain");
      double f1;
      try {
        f1 = source.field(q).squaredNorm();
      } catch (const OnConductor&) {
        t *= 0.5;
        continue;
      }
      if (f1 <= f0 + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No decrease left at the tolerance scale: p is a minimum to working precision.
      if (len < 10.0 * config.position_tolerance) return {p, std::sqrt(f0), it};
      throw NoConvergence("line search stalled at " + fmt_point(p));
    }
    p = q;
  }
  throw NoConvergence("no convergence within " + std::to_string(config.max_iterations) + " iterations");
}

Vec3 find_minimum(const PotentialModel& model, const FieldSource& source, const MinimizationConfig& config) {
  if (!(config.position_tolerance > 0.0) || !(config.epsilon_B > 0.0) || config.max_iterations < 1)
    throw std::invalid_argument("minimization tolerances must be positive");
  const auto seeds = seed_points(config);
  if (seeds.empty()) throw std::invalid_argument("minimization needs seeds or a region");
  bool any_above = false;
  for (const auto& s : seeds) any_above |= s.z() > source.surface_z();
  if (!any_above) throw std::invalid_argument("no seed lies above the chip surface");
  const Box domain = search_domain(config, source.surface_z());

  std::optional<MinimumResult> best;
  std::string first_error;
  bool escaped = false;
  for (const auto& s : seeds) {
    MinimumResult r;
    try {
      r = descend(source, s, domain, config);
    } catch (const EscapedDomain& e) {
      if (first_error.empty()) first_error = e.what();
      escaped = true;
      continue;
    } catch (const Error& e) {
      if (first_error.empty()) first_error = e.what();
      continue;
    }
    if (!best) {
      best = r;
      continue;
    }
    const double vb = model.effective_moment * best->B;
    const double vr = model.effective_moment * r.B;
    const double tie = 1e-9 * std::max(vb, vr) + 1e-40;
    if (vr < vb - tie) {
      best = r;
    } else if (std::abs(vr - vb) <= tie &&
               (r.position - seeds.front()).norm() < (best->position - seeds.front()).norm()) {
      best = r;
    }
  }
  if (!best) {
    if (escaped && first_error.find("flat") == std::string::npos) throw EscapedDomain(first_error);
    throw NoConvergence(first_error);
  }
  return best->position;
}

Vec3 find_minimum(const PotentialModel& model, const ChipLayout& layout, const MinimizationConfig& config) {
  return find_minimum(model, FieldModel(layout), config);
}

double ground_state_size(double frequency_hz, double mass) {
  return std::sqrt(PC::hbar / (mass * 2.0 * std::numbers::pi * frequency_hz));
}

double TrapCharacterization::gradient() const {
  double g = 0.0;
  for (const auto& e : grad_eigen) g = std::max(g, std::abs(e.value));
  return g;
}

double TrapCharacterization::mean_frequency() const {
  if (!frequencies) return std::numeric_limits<double>::quiet_NaN();
  double log_sum = 0.0;
  int n = 0;
  for (double f : *frequencies)
    if (std::isfinite(f)) {
      log_sum += std::log(f);
      ++n;
    }
  return n ? std::exp(log_sum / n) : std::numeric_limits<double>::quiet_NaN();
}

double TrapCharacterization::max_frequency() const {
  if (!frequencies) return std::numeric_limits<double>::quiet_NaN();
  double m = std::numeric_limits<double>::quiet_NaN();
  for (double f : *frequencies)
    if (std::isfinite(f) && !(f <= m)) m = f;
  return m;
}

namespace {

std::array<EigenPair, 3> eigen_pairs(const Mat3& m) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (m + m.transpose()));
  std::array<EigenPair, 3> out;
  for (int i = 0; i < 3; ++i) {
    Vec3 v = es.eigenvectors().col(i);
    // Fix the sign so the largest component is positive; keeps output stable.
    int k;
    v.cwiseAbs().maxCoeff(&k);
    if (v[k] < 0) v = -v;
    out[i] = {es.eigenvalues()[i], v};
  }
  return out;
}

}  // namespace

TrapCharacterization characterize(const PotentialModel& model, const FieldSource& source, const Vec3& p_star,
                                  const CharacterizeOptions& options) {
  const FieldJet j = source.jet(p_star);
  const auto step = newton_step(b2_hessian(source, p_star), b2_gradient(j));
  if (step && step->norm() > 10.0 * options.position_tolerance)
    throw NotAMinimum("point " + fmt_point(p_star) + " is not a converged minimum (Newton step " +
                      std::to_string(step->norm()) + " m)");

  TrapCharacterization c;
  c.position = p_star;
  c.B_min = j.B.norm();
  c.grad_eigen = eigen_pairs(j.J);
  c.depth_bias = depth_from_bias(source.bias().norm(), model);
  const double mu = model.effective_moment;
  c.larmor_frequency = mu * std::max(c.B_min, options.epsilon_B) / PC::h;

  if (c.B_min > options.epsilon_B) {
    c.regime = Regime::harmonic;
    c.curvature_eigen = eigen_pairs(magnitude_hessian(source, p_star, options.epsilon_B));
    std::array<double, 3> f, s;
    for (int i = 0; i < 3; ++i) {
      const double lam = (*c.curvature_eigen)[i].value;
      if (lam > 0.0) {
        f[i] = std::sqrt(mu * lam / model.mass()) / (2.0 * std::numbers::pi);
        s[i] = ground_state_size(f[i], model.mass());
      } else {
        f[i] = s[i] = std::numeric_limits<double>::quiet_NaN();
        c.diagnostics.push_back("curvature eigenvalue " + std::to_string(i) +
                                " is not positive; frequency omitted for that axis");
      }
    }
    c.frequencies = f;
    c.ground_state_sizes = s;
    const double fmax = c.max_frequency();
    if (std::isfinite(fmax)) c.adiabaticity = c.larmor_frequency / fmax;
  } else {
    c.regime = Regime::linear_quadrupole;
    c.diagnostics.push_back("|B| at the minimum is below epsilon_B; linear-quadrupole regime, no frequencies");
  }

  if (options.depth_region) {
    try {
      c.depth_numeric = depth_numeric(model, source, p_star, *options.depth_region, options.depth).barrier;
    } catch (const NoBarrier& e) {
      c.diagnostics.push_back(std::string("depth search: ") + e.what());
    }
  }
  return c;
}

TrapCharacterization characterize(const PotentialModel& model, const ChipLayout& layout, const Vec3& p_star,
                                  const CharacterizeOptions& options) {
  return characterize(model, FieldModel(layout), p_star, options);
}

namespace {

struct DepthGrid {
  std::array<int, 3> n;
  std::vector<double> V;  // J, +inf on conductors
  std::vector<char> escape;
  std::size_t start = 0;

  std::size_t index(int i, int j, int k) const { return (static_cast<std::size_t>(i) * n[1] + j) * n[2] + k; }
};

DepthGrid build_grid(const PotentialModel& model, const FieldSource& source, const Vec3& p_star, const Box& region,
                     int nodes) {
  DepthGrid g;
  for (int a = 0; a < 3; ++a) g.n[a] = region.extent()[a] > 0.0 ? nodes : 1;
  const std::size_t total = static_cast<std::size_t>(g.n[0]) * g.n[1] * g.n[2];
  g.V.resize(total);
  g.escape.assign(total, 0);
  const double zs = source.surface_z();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j)
      for (int k = 0; k < g.n[2]; ++k) {
        const std::size_t id = g.index(i, j, k);
        const Vec3 p = grid_point(region, g.n, {i, j, k});
        try {
          g.V[id] = model.at(source.field(p)).joules();
        } catch (const OnConductor&) {
          g.V[id] = std::numeric_limits<double>::infinity();
        }
        const std::array<int, 3> idx{i, j, k};
        bool face = false;
        for (int a = 0; a < 3; ++a)
          if (g.n[a] > 1 && (idx[a] == 0 || idx[a] == g.n[a] - 1)) face = true;
        if (p.z() <= zs) g.escape[id] = 2;  // absorbing surface, reachable at any level
        else if (face) g.escape[id] = 1;
        const double d = (p - p_star).squaredNorm();
        if (d < best) {
          best = d;
          g.start = id;
        }
      }
  return g;
}

// Flood from the start through nodes with V <= level (surface nodes always
// pass). Returns the escape node reached, if any, and the highest node value
// crossed on the way.
struct FloodResult {
  bool escaped = false;
  double highest = -std::numeric_limits<double>::infinity();
  std::size_t highest_node = 0;
};

FloodResult flood(const DepthGrid& g, double level) {
  FloodResult r;
  std::vector<char> seen(g.V.size(), 0);
  std::deque<std::size_t> queue{g.start};
  seen[g.start] = 1;
  const std::size_t stride[3] = {static_cast<std::size_t>(g.n[1]) * g.n[2], static_cast<std::size_t>(g.n[2]), 1};
  while (!queue.empty()) {
    const std::size_t id = queue.front();
    queue.pop_front();
    if (g.escape[id] != 2 && g.V[id] > r.highest) {
      r.highest = g.V[id];
      r.highest_node = id;
    }
    if (g.escape[id] && id != g.start) {
      r.escaped = true;
      return r;
    }
    std::array<int, 3> idx{static_cast<int>(id / stride[0]), static_cast<int>((id / stride[1]) % g.n[1]),
                           static_cast<int>(id % g.n[2])};
    for (int a = 0; a < 3; ++a) {
      if (g.n[a] == 1) continue;
      for (int d : {-1, 1}) {
        const int c = idx[a] + d;
        if (c < 0 || c >= g.n[a]) continue;
        const std::size_t nb = d > 0 ? id + stride[a] : id - stride[a];
        if (seen[nb]) continue;
        if (g.escape[nb] != 2 && !(g.V[nb] <= level)) continue;
        seen[nb] = 1;
        queue.push_back(nb);
      }
    }
  }
  return r;
}

struct Barrier {
  double level;
  std::size_t saddle;
};

Barrier barrier_level(const DepthGrid& g) {
  if (g.escape[g.start]) return {g.V[g.start], g.start};
  std::vector<double> levels;
  levels.reserve(g.V.size());
  for (std::size_t i = 0; i < g.V.size(); ++i)
    if (std::isfinite(g.V[i]) && g.escape[i] != 2 && g.V[i] >= g.V[g.start]) levels.push_back(g.V[i]);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.empty() || !flood(g, levels.back()).escaped)
    throw NoBarrier("no escape path inside the search region");
  std::size_t lo = 0, hi = levels.size() - 1;  // flood(levels[hi]) escapes
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (flood(g, levels[mid]).escaped)
      hi = mid;
    else
      lo = mid + 1;
  }
  const auto r = flood(g, levels[hi]);
  return {levels[hi], r.highest_node};
}

}  // namespace

DepthResult depth_numeric(const PotentialModel& model, const FieldSource& source, const Vec3& p_star,
                          const Box& region, const DepthOptions& options) {
  if (!region.contains(p_star)) throw std::invalid_argument("p* lies outside the depth search region");
  if (options.grid < 3) throw std::invalid_argument("depth grid needs at least 3 nodes per axis");
  const double v0 = model.at(source.field(p_star)).joules();

  auto solve = [&](int nodes) {
    const auto g = build_grid(model, source, p_star, region, nodes);
    const auto b = barrier_level(g);
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (double v : g.V)
      if (std::isfinite(v)) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    const double tol = 1e-6 * (vmax - vmin) + 1e-40;
    if (b.level - v0 <= tol) throw NoBarrier("the minimum is connected to the region boundary at its own level");
    std::array<int, 3> idx{static_cast<int>(b.saddle / (static_cast<std::size_t>(g.n[1]) * g.n[2])),
                           static_cast<int>((b.saddle / g.n[2]) % g.n[1]), static_cast<int>(b.saddle % g.n[2])};
    return DepthResult{Energy(b.level - v0), nodes, false, grid_point(region, g.n, idx)};
  };

  DepthResult r = solve(options.grid);
  if (!options.refine) return r;
  DepthResult fine = solve(2 * options.grid);
  const double change = std::abs(fine.barrier.joules() - r.barrier.joules()) / fine.barrier.joules();
  fine.converged = change < options.refine_tolerance;
  return fine;
}

void write_characterization(std::ostream& out, const TrapCharacterization& c) {
  auto line = [&](const std::string& key, double v, const char* unit) {
    out << key << " = " << std::setprecision(17) << v << " # " << unit << '\n';
  };
  out << "regime = " << to_string(c.regime) << '\n';
  line("position_x", c.position.x(), "m");
  line("position_y", c.position.y(), "m");
  line("position_z", c.position.z(), "m");
  line("height_um", c.position.z() * 1e6, "um");
  line("B_min", c.B_min, "T");
  line("B_min_G", c.B_min * 1e4, "G");
  for (int i = 0; i < 3; ++i) {
    const auto& e = c.grad_eigen[i];
    const std::string k = "grad_eigen_" + std::to_string(i);
    line(k + "_value", e.value, "T/m");
    line(k + "_axis_x", e.axis.x(), "1");
    line(k + "_axis_y", e.axis.y(), "1");
    line(k + "_axis_z", e.axis.z(), "1");
  }
  line("gradient", c.gradient(), "T/m");
  line("gradient_kG_per_cm", c.gradient() * 0.1, "kG/cm");
  if (c.curvature_eigen)
    for (int i = 0; i < 3; ++i) {
      const auto& e = (*c.curvature_eigen)[i];
      const std::string k = "curvature_eigen_" + std::to_string(i);
      line(k + "_value", e.value, "T/m^2");
      line(k + "_axis_x", e.axis.x(), "1");
      line(k + "_axis_y", e.axis.y(), "1");
      line(k + "_axis_z", e.axis.z(), "1");
    }
  if (c.frequencies)
    for (int i = 0; i < 3; ++i) line("frequency_" + std::to_string(i), (*c.frequencies)[i], "Hz");
  if (c.ground_state_sizes)
    for (int i = 0; i < 3; ++i) line("ground_state_size_" + std::to_string(i), (*c.ground_state_sizes)[i], "m");
  if (c.frequencies) line("mean_frequency", c.mean_frequency(), "Hz");
  const auto db = energy_views(c.depth_bias);
  line("depth_bias", db.joules, "J");
  line("depth_bias_MHz", db.frequency_MHz, "MHz");
  line("depth_bias_mK", db.temperature_mK, "mK");
  if (c.depth_numeric) {
    const auto dn = energy_views(*c.depth_numeric);
    line("depth_numeric", dn.joules, "J");
    line("depth_numeric_MHz", dn.frequency_MHz, "MHz");
    line("depth_numeric_mK", dn.temperature_mK, "mK");
  }
  line("larmor_frequency", c.larmor_frequency, "Hz");
  if (c.adiabaticity) line("adiabaticity", *c.adiabaticity, "1");
  for (const auto& d : c.diagnostics) out << "# diagnostic: " << d << '\n';
}

}  // namespace atomchip
