#include "atomchip/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "atomchip/errors.hpp"

namespace atomchip {

using json = nlohmann::json;

double Ramp::value_at(double t) const {
  if (t <= points.front().first) return points.front().second;
  if (t >= points.back().first) return points.back().second;
  const auto it = std::upper_bound(points.begin(), points.end(), t,
                                   [](double x, const std::pair<double, double>& p) { return x < p.first; });
  const auto& [t1, v1] = *it;
  const auto& [t0, v0] = *(it - 1);
  return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
}

double Ramp::max_slope() const {
  double s = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    s = std::max(s, std::abs(points[i].second - points[i - 1].second) / (points[i].first - points[i - 1].first));
  return s;
}

namespace {

bool is_bias_channel(const std::string& c) { return c == "bias.x" || c == "bias.y" || c == "bias.z"; }

int bias_axis(const std::string& c) { return c.back() - 'x'; }

}  // namespace

void check_sequence(const Sequence& seq) {
  if (!(seq.duration >= 0.0) || !std::isfinite(seq.duration)) throw ParseError("/duration", "duration must be finite and >= 0");
  std::set<std::string> seen;
  for (std::size_t r = 0; r < seq.ramps.size(); ++r) {
    const auto& ramp = seq.ramps[r];
    const auto where = "/ramps/" + std::to_string(r);
    if (!is_bias_channel(ramp.channel) && !seq.base_layout.find_wire(ramp.channel))
      throw ParseError(where + "/channel", "unknown channel '" + ramp.channel + "'");
    if (!seen.insert(ramp.channel).second)
      throw ParseError(where + "/channel", "second ramp on channel '" + ramp.channel + "'");
    if (ramp.points.empty()) throw ParseError(where + "/points", "a ramp needs at least one point");
    for (std::size_t i = 0; i < ramp.points.size(); ++i) {
      const auto& [t, v] = ramp.points[i];
      if (!std::isfinite(t) || !std::isfinite(v))
        throw ParseError(where + "/points/" + std::to_string(i), "non-finite ramp point");
      if (i > 0 && !(t > ramp.points[i - 1].first))
        throw ParseError(where + "/points/" + std::to_string(i), "ramp times must be strictly increasing");
    }
    if (ramp.points.back().first > seq.duration * (1 + 1e-12))
      throw ParseError(where, "ramp extends past the sequence duration");
  }
}

ChipLayout instantiate(const Sequence& seq, double t) {
  if (!(t >= 0.0 && t <= seq.duration * (1 + 1e-12)))
    throw TimeOutOfRange("time " + std::to_string(t) + " s is outside [0, " + std::to_string(seq.duration) + "] s");
  ChipLayout l = seq.base_layout;
  for (const auto& r : seq.ramps) {
    const double v = r.value_at(t);
    if (is_bias_channel(r.channel))
      l.bias.vector[bias_axis(r.channel)] = v;
    else
      l.find_wire(r.channel)->current = v;
  }
  return l;
}

Sequence time_scaled(const Sequence& seq, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("time scale factor must be positive");
  Sequence s = seq;
  s.duration *= factor;
  for (auto& r : s.ramps)
    for (auto& p : r.points) p.first *= factor;
  return s;
}

Sequence reversed(const Sequence& seq) {
  Sequence s = seq;
  for (auto& r : s.ramps) {
    for (auto& p : r.points) p.first = seq.duration - p.first;
    std::reverse(r.points.begin(), r.points.end());
  }
  return s;
}

namespace {

constexpr double G = 1e-4;

Ramp ramp(std::string channel, std::vector<std::pair<double, double>> pts) { return {std::move(channel), std::move(pts)}; }

Sequence fig4_transfer(double T) {
  Sequence s;
  s.label = "fig4-transfer";
  s.base_layout = builtin_layout("two-u-plus-thin");
  const double b = s.base_layout.bias.vector.x();  // -19 G
  for (const char* u : {"u1", "u2"}) s.ramps.push_back(ramp(u, {{0, 2.0}, {T, 0.5}, {2 * T, 0.0}}));
  s.ramps.push_back(ramp("bias.x", {{2 * T, b}, {3 * T, -24 * G}}));
  s.duration = 3 * T;
  return s;
}

Sequence fig3_loading(double T) {
  Sequence s;
  s.label = "fig3-loading";
  s.base_layout = builtin_layout("two-u-plus-thin", {{"u_current", 0.0},
                                                     {"thin_current", 0.0},
                                                     {"underchip_current", 16.0},
                                                     {"bias", 8 * G},
                                                     {"ioffe", 0.0}});
  s.ramps.push_back(ramp("bias.x", {{0, -8 * G}, {T, -19 * G}}));
  s.ramps.push_back(ramp("underchip", {{T, 16.0}, {2 * T, 0.0}}));
  for (const char* u : {"u1", "u2"}) s.ramps.push_back(ramp(u, {{T, 0.0}, {2 * T, 2.0}, {3 * T, 2.0}, {4 * T, 0.0}}));
  s.ramps.push_back(ramp("thin", {{2 * T, 0.0}, {3 * T, 0.3}}));
  // The longitudinal field comes on with the thin wire; the U traps do not need it.
  s.ramps.push_back(ramp("bias.y", {{2 * T, 0.0}, {3 * T, -1 * G}}));
  s.duration = 4 * T;
  return s;
}

Sequence onchip_bias_demo(double T) {
  Sequence s;
  s.label = "onchip-bias-demo";
  s.base_layout = builtin_layout("onchip-bias");
  for (const char* u : {"u1", "u2"}) s.ramps.push_back(ramp(u, {{0, -2.0}, {T, -1.0}}));
  s.duration = T;
  return s;
}

}  // namespace

std::vector<std::string> builtin_sequence_names() { return {"fig4-transfer", "fig3-loading", "onchip-bias-demo"}; }

Sequence builtin_sequence(std::string_view name, double stage_time) {
  if (!(stage_time > 0.0)) throw std::invalid_argument("stage time must be positive");
  Sequence s;
  if (name == "fig4-transfer")
    s = fig4_transfer(stage_time);
  else if (name == "fig3-loading")
    s = fig3_loading(stage_time);
  else if (name == "onchip-bias-demo")
    s = onchip_bias_demo(stage_time);
  else
    throw UnknownSequence("unknown builtin sequence '" + std::string(name) + "'");
  check_sequence(s);
  return s;
}

namespace {

const json& member(const json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw MissingField(where + "/" + key, "missing field '" + key + "'");
  return *it;
}

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError(where, "expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ParseError(where + "/" + key, "unknown key '" + key + "'");
}

double num(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(where, "number is not finite");
  return v;
}

std::string str(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where, "expected a string");
  return j.get<std::string>();
}

double scale_to(const std::string& unit, const char* si, const std::string& where) {
  try {
    return convert(1.0, unit, si);
  } catch (const UnknownUnit& e) {
    throw UnknownUnit(where + ": " + e.what());
  } catch (const IncompatibleUnits& e) {
    throw ParseError(where, e.what());
  }
}

}  // namespace

Sequence parse_sequence(std::string_view text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError("", e.what(), line);
  }
  only_keys(doc, {"label", "base_layout", "duration", "ramps"}, "");
  Sequence s;
  if (doc.contains("label")) s.label = str(doc["label"], "/label");
  const auto base = str(member(doc, "base_layout", ""), "/base_layout");
  if (base.rfind("builtin:", 0) == 0 || std::filesystem::path(base).is_absolute())
    s.base_layout = resolve_layout(base);
  else
    s.base_layout = load_layout((std::filesystem::path(base_dir) / base).string());

  const auto& dur = member(doc, "duration", "");
  only_keys(dur, {"value", "unit"}, "/duration");
  s.duration = num(member(dur, "value", "/duration"), "/duration/value") *
               scale_to(str(member(dur, "unit", "/duration"), "/duration/unit"), "s", "/duration/unit");

  const auto& ramps = member(doc, "ramps", "");
  if (!ramps.is_array()) throw ParseError("/ramps", "expected an array");
  for (std::size_t r = 0; r < ramps.size(); ++r) {
    const auto where = "/ramps/" + std::to_string(r);
    const auto& jr = ramps[r];
    only_keys(jr, {"channel", "points", "units"}, where);
    Ramp ramp;
    ramp.channel = str(member(jr, "channel", where), where + "/channel");
    const auto& units = member(jr, "units", where);
    only_keys(units, {"t", "value"}, where + "/units");
    const double ts = scale_to(str(member(units, "t", where + "/units"), where + "/units/t"), "s", where + "/units/t");
    const char* vsi = is_bias_channel(ramp.channel) ? "T" : "A";
    const double vs =
        scale_to(str(member(units, "value", where + "/units"), where + "/units/value"), vsi, where + "/units/value");
    const auto& pts = member(jr, "points", where);
    if (!pts.is_array()) throw ParseError(where + "/points", "expected an array of [t, value]");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto pw = where + "/points/" + std::to_string(i);
      if (!pts[i].is_array() || pts[i].size() != 2) throw ParseError(pw, "expected [t, value]");
      ramp.points.emplace_back(num(pts[i][0], pw) * ts, num(pts[i][1], pw) * vs);
    }
    s.ramps.push_back(std::move(ramp));
  }
  check_sequence(s);
  return s;
}

Sequence load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open sequence file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sequence(ss.str(), std::filesystem::path(path).parent_path().string());
}

Sequence resolve_sequence(const std::string& spec, double stage_time) {
  constexpr std::string_view prefix = "builtin:";
  if (spec.rfind(prefix, 0) == 0) return builtin_sequence(std::string_view(spec).substr(prefix.size()), stage_time);
  return load_sequence(spec);
}

std::vector<Vec3> default_seeds() {
  std::vector<Vec3> s;
  for (double h : {10e-6, 30e-6, 100e-6, 300e-6, 1e-3, 3e-3, 5e-3}) s.emplace_back(0.0, 0.0, h);
  return s;
}

const TrapCharacterization* TrapTrajectory::first() const {
  for (const auto& e : entries)
    if (e) return &*e;
  return nullptr;
}

const TrapCharacterization* TrapTrajectory::last() const {
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (*it) return &**it;
  return nullptr;
}

TrapTrajectory track(const Sequence& seq, const std::vector<double>& times, const PotentialModel& model,
                     const TrackConfig& config) {
  if (!std::is_sorted(times.begin(), times.end())) throw std::invalid_argument("track times must be sorted");
  TrapTrajectory traj;
  FieldModel field(seq.base_layout, config.filaments);
  MinimizationConfig fresh = config.minimization;
  if (fresh.seeds.empty() && !fresh.region) fresh.seeds = default_seeds();
  const Box domain = search_domain(fresh, seq.base_layout.surface_z);

  std::optional<Vec3> previous;
  std::vector<double> last_currents;
  Vec3 last_bias = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  for (double t : times) {
    field.update(instantiate(seq, t));
    traj.times.push_back(t);
    // Unchanged fields give the same trap as the previous time.
    const bool same = field.currents() == last_currents && field.bias() == last_bias;
    last_currents = field.currents();
    last_bias = field.bias();
    if (same && !traj.entries.empty() && traj.entries.back()) {
      traj.entries.push_back(traj.entries.back());
      continue;
    }
    std::optional<Vec3> p;
    if (previous) {
      MinimizationConfig cont = fresh;
      cont.seeds = {*previous};
      cont.region.reset();
      cont.domain = domain;
      try {
        p = find_minimum(model, field, cont);
      } catch (const Error& e) {
        std::ostringstream d;
        d << "t=" << t << " s: continuation failed (" << e.what() << "); restarting from the configured seeds";
        traj.diagnostics.push_back(d.str());
      }
    }
    if (!p) {
      try {
        p = find_minimum(model, field, fresh);
      } catch (const Error& e) {
        std::ostringstream d;
        d << "t=" << t << " s: no trap (" << e.what() << ")";
        traj.diagnostics.push_back(d.str());
      }
    }
    if (p) {
      try {
        traj.entries.push_back(characterize(model, field, *p, config.characterize));
        previous = p;
        continue;
      } catch (const Error& e) {
        std::ostringstream d;
        d << "t=" << t << " s: characterization failed (" << e.what() << ")";
        traj.diagnostics.push_back(d.str());
      }
    }
    traj.entries.emplace_back();
  }

  // Discontinuities between consecutive present entries.
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < traj.entries.size(); ++i)
    if (traj.entries[i]) present.push_back(i);
  auto step = [&](std::size_t k) {
    return (traj.entries[present[k]]->position - traj.entries[present[k - 1]]->position).norm();
  };
  for (std::size_t k = 1; k < present.size(); ++k) {
    const double s = step(k);
    const double before = k >= 2 ? step(k - 1) : 0.0;
    const double after = k + 1 < present.size() ? step(k + 1) : 0.0;
    if (present.size() < 3) break;
    if (s > 1e-6 && s > config.jump_factor * std::max(before, after)) {
      std::ostringstream d;
      d << "t=" << traj.times[present[k]] << " s: trap position jumps by " << s << " m (discontinuity)";
      traj.diagnostics.push_back(d.str());
    }
  }
  return traj;
}

void write_trajectory_csv(std::ostream& out, const TrapTrajectory& traj) {
  out << "t,present,regime,x,y,z,B_min,gradient,grad_0,grad_1,grad_2,curv_0,curv_1,curv_2,f_0,f_1,f_2,f_mean,"
         "gs_0,gs_1,gs_2,depth_bias,depth_numeric,larmor,adiabaticity\n";
  out << std::setprecision(17);
  auto opt = [&](bool has, double v) {
    out << ',';
    if (has) out << v;
  };
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << traj.times[i];
    const auto& e = traj.entries[i];
    if (!e) {
      out << ",0" << std::string(23, ',') << '\n';
      continue;
    }
    out << ",1," << to_string(e->regime);
    for (int a = 0; a < 3; ++a) out << ',' << e->position[a];
    out << ',' << e->B_min << ',' << e->gradient();
    for (int a = 0; a < 3; ++a) out << ',' << e->grad_eigen[a].value;
    for (int a = 0; a < 3; ++a) opt(e->curvature_eigen.has_value(), e->curvature_eigen ? (*e->curvature_eigen)[a].value : 0);
    for (int a = 0; a < 3; ++a) opt(e->frequencies.has_value(), e->frequencies ? (*e->frequencies)[a] : 0);
    opt(e->frequencies.has_value(), e->mean_frequency());
    for (int a = 0; a < 3; ++a)
      opt(e->ground_state_sizes.has_value(), e->ground_state_sizes ? (*e->ground_state_sizes)[a] : 0);
    out << ',' << e->depth_bias.joules();
    opt(e->depth_numeric.has_value(), e->depth_numeric ? e->depth_numeric->joules() : 0);
    out << ',' << e->larmor_frequency;
    opt(e->adiabaticity.has_value(), e->adiabaticity.value_or(0));
    out << '\n';
  }
}

namespace {

using PC = PhysicalConstants;

// Classical occupied volume V_eff(T) = integral of exp(-V/kT) and mean energy
// per particle in units of kT, for the two local trap shapes.
struct TrapShape {
  Regime regime;
  double omega_bar = 0.0;  // rad/s, harmonic
  double det_gradient = 0.0;  // |det dB/dx|, quadrupole

  double log_volume(double T, const PotentialModel& m) const {
    const double kT = PC::kB * T;
    if (regime == Regime::harmonic) return 1.5 * std::log(2.0 * std::numbers::pi * kT / m.mass()) - 3.0 * std::log(omega_bar);
    return std::log(8.0 * std::numbers::pi) + 3.0 * std::log(kT / m.effective_moment) - std::log(det_gradient);
  }
  double mean_energy() const { return regime == Regime::harmonic ? 3.0 : 4.5; }
  // d log V_eff / d log T
  double volume_exponent() const { return regime == Regime::harmonic ? 1.5 : 3.0; }
};

TrapShape shape_of(const TrapCharacterization& c) {
  TrapShape s{c.regime};
  if (c.regime == Regime::harmonic) {
    s.omega_bar = 2.0 * std::numbers::pi * c.mean_frequency();
    if (!std::isfinite(s.omega_bar)) throw RegimeMismatch("harmonic trap without a positive curvature on every axis");
  } else {
    s.det_gradient = std::abs(c.grad_eigen[0].value * c.grad_eigen[1].value * c.grad_eigen[2].value);
    if (!(s.det_gradient > 0.0)) throw RegimeMismatch("quadrupole endpoint is degenerate (a guide); no finite volume");
  }
  return s;
}

// Entropy per particle up to a T-independent constant:
// ln V_eff + 3/2 ln T + <E>/kT.
double entropy(const TrapShape& s, double T, const PotentialModel& m) {
  return s.log_volume(T, m) + 1.5 * std::log(T) + s.mean_energy();
}

}  // namespace

CompressionReport compression_report(const TrapCharacterization& initial, const TrapCharacterization& final,
                                     double initial_temperature, const PotentialModel& model, CompressionModel mode) {
  if (!(initial_temperature > 0.0)) throw std::invalid_argument("initial temperature must be positive");
  CompressionReport r;
  r.model = mode;
  r.initial_regime = initial.regime;
  r.final_regime = final.regime;
  r.mean_frequency_initial = initial.mean_frequency();
  r.mean_frequency_final = final.mean_frequency();
  r.temperature_initial = initial_temperature;
  r.depth_final = final.depth_numeric.value_or(final.depth_bias);

  if (mode == CompressionModel::harmonic) {
    if (initial.regime != Regime::harmonic || final.regime != Regime::harmonic)
      throw RegimeMismatch("harmonic compression model needs harmonic endpoints");
    const double ratio = r.mean_frequency_final / r.mean_frequency_initial;
    if (!std::isfinite(ratio)) throw RegimeMismatch("endpoint mean frequency unavailable");
    r.temperature_factor = ratio;
    r.density_factor = std::pow(ratio, 1.5);
  } else {
    const auto si = shape_of(initial);
    const auto sf = shape_of(final);
    const double S = entropy(si, initial_temperature, model);
    // entropy(sf, T) is linear in ln T with slope volume_exponent + 3/2.
    const double ref = entropy(sf, 1.0, model);
    const double Tf = std::exp((S - ref) / (sf.volume_exponent() + 1.5));
    r.temperature_factor = Tf / initial_temperature;
    r.density_factor = std::exp(si.log_volume(initial_temperature, model) - sf.log_volume(Tf, model));
  }
  r.temperature_final = initial_temperature * r.temperature_factor;
  r.loss_risk = PC::kB * r.temperature_final > r.depth_final.joules() / 10.0;
  return r;
}

CompressionReport compression_report(const TrapTrajectory& traj, double initial_temperature,
                                     const PotentialModel& model, CompressionModel mode) {
  const auto* a = traj.first();
  const auto* b = traj.last();
  if (!a || !b) throw RegimeMismatch("trajectory has no trap");
  return compression_report(*a, *b, initial_temperature, model, mode);
}

void write_compression_report(std::ostream& out, const CompressionReport& r) {
  out << std::setprecision(17);
  out << "model = " << (r.model == CompressionModel::harmonic ? "harmonic" : "entropy") << '\n';
  out << "initial_regime = " << to_string(r.initial_regime) << '\n';
  out << "final_regime = " << to_string(r.final_regime) << '\n';
  out << "mean_frequency_initial = " << r.mean_frequency_initial << " # Hz\n";
  out << "mean_frequency_final = " << r.mean_frequency_final << " # Hz\n";
  out << "temperature_initial = " << r.temperature_initial << " # K\n";
  out << "temperature_final = " << r.temperature_final << " # K\n";
  out << "temperature_factor = " << r.temperature_factor << " # 1\n";
  out << "density_factor = " << r.density_factor << " # 1\n";
  out << "depth_final = " << r.depth_final.joules() << " # J\n";
  out << "depth_final_mK = " << r.depth_final.kelvin() * 1e3 << " # mK\n";
  out << "loss_risk = " << (r.loss_risk ? "true" : "false") << '\n';
}

}  // namespace atomchip
