#include "atomchip/magnetostatics.hpp"

#include <cmath>
#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "atomchip/errors.hpp"

namespace atomchip {

namespace {

constexpr double kMu0Over4Pi = PhysicalConstants::mu0 / (4.0 * std::numbers::pi);

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

[[noreturn]] void on_conductor(const Vec3& p) {
  std::ostringstream s;
  s << std::setprecision(9) << "point (" << p.x() << ", " << p.y() << ", " << p.z() << ") m lies on a conductor";
  throw OnConductor(s.str());
}

// Shared core of the segment formula. With r1 = p - a, r2 = p - b, L = b - a:
//   B = k g (L x r1),  g = (R1 + R2) / (R1 R2 (R1 R2 + r1.r2)).
// The denominator vanishes only on the segment itself.
template <bool WithJacobian>
Vec3 segment_core(const Vec3& p, const Filament& f, Mat3* jac) {
  const Vec3 L = f.b - f.a;
  const Vec3 r1 = p - f.a;
  const Vec3 r2 = p - f.b;
  const double R1 = r1.norm();
  const double R2 = r2.norm();
  const double P = R1 * R2;
  const double Q = P + r1.dot(r2);
  const double den = P * Q;
  if (!(den > 1e-8 * P * P) && segment_distance(p, f.a, f.b) < kOnConductorTolerance) on_conductor(p);
  const double k = kMu0Over4Pi * f.current;
  const Vec3 c = L.cross(r1);
  const double g = (R1 + R2) / den;
  if constexpr (WithJacobian) {
    const Vec3 gradN = r1 / R1 + r2 / R2;
    const Vec3 gradP = R2 / R1 * r1 + R1 / R2 * r2;
    const Vec3 gradQ = gradP + r1 + r2;
    const Vec3 gradDen = Q * gradP + P * gradQ;
    const Vec3 gradG = gradN / den - g / den * gradDen;
    *jac = k * (g * skew(L) + c * gradG.transpose());
  }
  return k * g * c;
}

// B = k (d x r1) / (R1 (R1 - r1.d)) for a ray from the origin along d.
template <bool WithJacobian>
Vec3 lead_core(const Vec3& p, const Lead& l, Mat3* jac) {
  const Vec3& d = l.direction;
  const Vec3 r1 = p - l.origin;
  const double R1 = r1.norm();
  const double s = r1.dot(d);
  const double q = R1 * R1 - R1 * s;
  if (!(q > 1e-8 * R1 * R1)) {
    const double along = std::max(s, 0.0);
    if ((r1 - along * d).norm() < kOnConductorTolerance) on_conductor(p);
  }
  const double k = kMu0Over4Pi * l.current;
  const Vec3 c = d.cross(r1);
  const double h = 1.0 / q;
  if constexpr (WithJacobian) {
    const Vec3 gradQ = 2.0 * r1 - s / R1 * r1 - R1 * d;
    const Vec3 gradH = -h * h * gradQ;
    *jac = k * (h * skew(d) + c * gradH.transpose());
  }
  return k * h * c;
}

Vec3 in_plane_normal(const Vec3& a, const Vec3& b) {
  Vec3 t = b - a;
  t.z() = 0.0;
  const double n = t.norm();
  if (n == 0.0) return Vec3::UnitX();  // vertical run: offset along x
  t /= n;
  return {-t.y(), t.x(), 0.0};  // z x t
}

// Offset direction at every vertex, scaled so that a filament shifted by s
// along it stays at perpendicular distance s from each adjoining segment.
std::vector<Vec3> miter_offsets(const std::vector<Vec3>& path, bool closed) {
  const std::size_t nv = path.size();
  const std::size_t ns = nv - 1;
  std::vector<Vec3> normals(ns);
  for (std::size_t i = 0; i < ns; ++i) normals[i] = in_plane_normal(path[i], path[i + 1]);
  std::vector<Vec3> out(nv);
  auto join = [](const Vec3& n0, const Vec3& n1) -> Vec3 {
    Vec3 m = n0 + n1;
    const double mn = m.norm();
    if (mn < 1e-9) return n1;  // hairpin; no sensible miter
    m /= mn;
    return m / m.dot(n1);
  };
  out.front() = normals.front();
  out.back() = normals.back();
  for (std::size_t i = 1; i + 1 < nv; ++i) out[i] = join(normals[i - 1], normals[i]);
  if (closed) {
    const Vec3 m = join(normals.back(), normals.front());
    out.front() = m;
    out.back() = m;
  }
  return out;
}

double lead_distance(const Vec3& p, const Lead& l) {
  const Vec3 r = p - l.origin;
  const double along = std::max(r.dot(l.direction), 0.0);
  return (r - along * l.direction).norm();
}

}  // namespace

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 L = b - a;
  const double LL = L.squaredNorm();
  double t = LL > 0.0 ? (p - a).dot(L) / LL : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * L)).norm();
}

Vec3 segment_field(const Vec3& p, const Filament& f) { return segment_core<false>(p, f, nullptr); }
Vec3 segment_field(const Vec3& p, const Filament& f, Mat3& jacobian) { return segment_core<true>(p, f, &jacobian); }
Vec3 lead_field(const Vec3& p, const Lead& l) { return lead_core<false>(p, l, nullptr); }
Vec3 lead_field(const Vec3& p, const Lead& l, Mat3& jacobian) { return lead_core<true>(p, l, &jacobian); }

FilamentSet decompose_wire(const Wire& wire, int n, int layers) {
  if (n < 1 || layers < 1) throw std::invalid_argument("filament and layer counts must be positive");
  const bool closed = wire.closed();
  const auto miter = miter_offsets(wire.path, closed);
  const double share = 1.0 / (static_cast<double>(n) * layers);
  FilamentSet set;
  for (int l = 0; l < layers; ++l) {
    const double dz = layers == 1 ? 0.0 : wire.thickness * ((l + 0.5) / layers - 0.5);
    for (int i = 0; i < n; ++i) {
      const double s = n == 1 ? 0.0 : wire.width * ((i + 0.5) / n - 0.5);
      std::vector<Vec3> pts;
      pts.reserve(wire.path.size());
      for (std::size_t v = 0; v < wire.path.size(); ++v) pts.push_back(wire.path[v] + s * miter[v] + Vec3(0, 0, dz));
      for (std::size_t v = 0; v + 1 < pts.size(); ++v) set.filaments.push_back({pts[v], pts[v + 1], share});
      if (!closed) {
        // Current rises out of the substrate into the first vertex and sinks at the last.
        set.leads.push_back({pts.front(), -Vec3::UnitZ(), -share});
        set.leads.push_back({pts.back(), -Vec3::UnitZ(), share});
      }
    }
  }
  return set;
}

std::vector<Filament> decompose(const Wire& wire, int n) {
  auto set = decompose_wire(wire, n);
  for (auto& f : set.filaments) f.current *= wire.current;
  return std::move(set.filaments);
}

namespace {

Vec3 set_field(const FilamentSet& set, const Vec3& p) {
  Vec3 B = Vec3::Zero();
  for (const auto& f : set.filaments) B += segment_field(p, f);
  for (const auto& l : set.leads) B += lead_field(p, l);
  return B;
}

}  // namespace

int auto_filament_count(const Wire& wire, int layers) {
  std::vector<Vec3> probes;
  for (std::size_t v = 0; v + 1 < wire.path.size(); ++v) {
    const Vec3 mid = 0.5 * (wire.path[v] + wire.path[v + 1]);
    for (double h : {0.5, 1.0, 2.0}) probes.push_back(mid + Vec3(0, 0, h * wire.width));
  }
  int n = kAutoFilamentStart;
  auto eval = [&](int count) {
    const auto set = decompose_wire(wire, count, layers);
    std::vector<Vec3> out;
    for (const auto& p : probes) out.push_back(set_field(set, p));
    return out;
  };
  auto prev = eval(n);
  while (n < kAutoFilamentCap) {
    auto next = eval(2 * n);
    double worst = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const double scale = next[i].norm();
      if (scale > 0.0) worst = std::max(worst, (next[i] - prev[i]).norm() / scale);
    }
    if (worst < kAutoFilamentTolerance) break;
    n *= 2;
    prev = std::move(next);
  }
  return n;
}

FieldModel::FieldModel(const ChipLayout& layout, FilamentPolicy policy)
    : bias_(layout.bias.vector), surface_z_(layout.surface_z) {
  for (const auto& w : layout.wires) {
    const int n = policy.n > 0 ? policy.n : auto_filament_count(w, policy.layers);
    ids_.push_back(w.id);
    sets_.push_back(decompose_wire(w, n, policy.layers));
    counts_.push_back(n);
    currents_.push_back(w.current);
  }
}

void FieldModel::update(const ChipLayout& layout) {
  if (layout.wires.size() != ids_.size()) throw std::invalid_argument("layout does not match the field model");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (layout.wires[i].id != ids_[i]) throw std::invalid_argument("layout does not match the field model");
    currents_[i] = layout.wires[i].current;
  }
  bias_ = layout.bias.vector;
}

void FieldModel::set_current(std::string_view wire_id, double current) {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == wire_id) {
      currents_[i] = current;
      return;
    }
  throw std::invalid_argument("no wire '" + std::string(wire_id) + "' in field model");
}

Vec3 FieldModel::field(const Vec3& p) const {
  Vec3 B = bias_;
  for (std::size_t w = 0; w < sets_.size(); ++w) {
    if (currents_[w] == 0.0) continue;
    B += currents_[w] * set_field(sets_[w], p);
  }
  return B;
}

FieldJet FieldModel::jet(const Vec3& p) const {
  FieldJet out{bias_, Mat3::Zero()};
  Mat3 j;
  for (std::size_t w = 0; w < sets_.size(); ++w) {
    const double I = currents_[w];
    if (I == 0.0) continue;
    Vec3 B = Vec3::Zero();
    Mat3 J = Mat3::Zero();
    for (const auto& f : sets_[w].filaments) {
      B += segment_field(p, f, j);
      J += j;
    }
    for (const auto& l : sets_[w].leads) {
      B += lead_field(p, l, j);
      J += j;
    }
    out.B += I * B;
    out.J += I * J;
  }
  return out;
}

double FieldModel::conductor_distance(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < sets_.size(); ++w) {
    if (currents_[w] == 0.0) continue;
    for (const auto& f : sets_[w].filaments) d = std::min(d, segment_distance(p, f.a, f.b));
    for (const auto& l : sets_[w].leads) d = std::min(d, lead_distance(p, l));
  }
  return d;
}

Vec3 total_field(const ChipLayout& layout, const Vec3& p, FilamentPolicy policy) {
  return FieldModel(layout, policy).field(p);
}

Mat3 field_jacobian(const ChipLayout& layout, const Vec3& p, FilamentPolicy policy) {
  return FieldModel(layout, policy).jet(p).J;
}

Vec3 magnitude_gradient(const FieldJet& jet) { return jet.J.transpose() * jet.B / jet.B.norm(); }

Mat3 magnitude_hessian(const FieldSource& source, const Vec3& p, double epsilon_B) {
  const double Bn = source.field(p).norm();
  if (!(Bn > epsilon_B)) throw DegenerateMagnitude("|B| below epsilon_B, Hessian of |B| undefined");
  const double d = source.conductor_distance(p);
  const double h = std::isfinite(d) ? std::max(1e-9, 1e-4 * d) : 1e-9;
  Mat3 H;
  for (int j = 0; j < 3; ++j) {
    Vec3 dp = Vec3::Zero();
    dp[j] = h;
    const Vec3 gp = magnitude_gradient(source.jet(p + dp));
    const Vec3 gm = magnitude_gradient(source.jet(p - dp));
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

Mat3 magnitude_hessian(const ChipLayout& layout, const Vec3& p, double epsilon_B) {
  return magnitude_hessian(FieldModel(layout), p, epsilon_B);
}

Vec3 grid_point(const Box& region, std::array<int, 3> resolution, std::array<int, 3> index) {
  Vec3 p;
  for (int a = 0; a < 3; ++a) {
    if (resolution[a] == 1)
      p[a] = 0.5 * (region.lo[a] + region.hi[a]);
    else
      p[a] = region.lo[a] + (region.hi[a] - region.lo[a]) * index[a] / (resolution[a] - 1);
  }
  return p;
}

std::vector<FieldSample> grid_map(const FieldSource& source, const Box& region, std::array<int, 3> resolution,
                                  bool with_jacobian) {
  for (int r : resolution)
    if (r < 1) throw std::invalid_argument("grid resolution must be at least 1 per axis");
  std::vector<FieldSample> out;
  out.reserve(static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2]);
  for (int i = 0; i < resolution[0]; ++i)
    for (int j = 0; j < resolution[1]; ++j)
      for (int k = 0; k < resolution[2]; ++k) {
        FieldSample s;
        s.point = grid_point(region, resolution, {i, j, k});
        try {
          if (with_jacobian) {
            const auto jt = source.jet(s.point);
            s.B = jt.B;
            s.jacobian = jt.J;
          } else {
            s.B = source.field(s.point);
          }
        } catch (const OnConductor&) {
          s.valid = false;
          s.B = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
        }
        out.push_back(std::move(s));
      }
  return out;
}

std::vector<FieldSample> grid_map(const ChipLayout& layout, const Box& region, std::array<int, 3> resolution,
                                  bool with_jacobian) {
  return grid_map(FieldModel(layout), region, resolution, with_jacobian);
}

void write_grid_csv(std::ostream& out, const std::vector<FieldSample>& samples) {
  out << "x,y,z,Bx,By,Bz,Bnorm\n";
  out << std::setprecision(17);
  for (const auto& s : samples) {
    out << s.point.x() << ',' << s.point.y() << ',' << s.point.z() << ',';
    if (s.valid)
      out << s.B.x() << ',' << s.B.y() << ',' << s.B.z() << ',' << s.B.norm() << '\n';
    else
      out << "nan,nan,nan,nan\n";
  }
}

}  // namespace atomchip
