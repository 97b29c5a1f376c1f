#include "atomchip/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include "atomchip/dynamics.hpp"
#include "atomchip/errors.hpp"
#include "atomchip/layout.hpp"
#include "atomchip/magnetostatics.hpp"
#include "atomchip/sequences.hpp"
#include "atomchip/trapshop.hpp"

#ifndef ATOMCHIP_VERSION
#define ATOMCHIP_VERSION "unknown"
#endif

namespace atomchip::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr std::string_view kBuiltin = "builtin:";

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

double number(const std::string& s, const std::string& flag) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(flag + ": '" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(flag + ": '" + s + "' is not a number");
  return v;
}

// "value,unit" in SI; `si_unit` is the SI tag of the expected dimension.
double quantity(const std::string& s, const std::string& si_unit, const std::string& flag) {
  const auto parts = split(s, ',');
  if (parts.size() == 1) return number(parts[0], flag);
  if (parts.size() != 2) throw std::invalid_argument(flag + " expects value,unit");
  return convert(number(parts[0], flag), parts[1], si_unit);
}

Box parse_region(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 6 && parts.size() != 7) throw std::invalid_argument("--region expects x0,x1,y0,y1,z0,z1[,unit]");
  const double scale = parts.size() == 7 ? convert(1.0, parts[6], "m") : 1.0;
  double v[6];
  for (int i = 0; i < 6; ++i) v[i] = number(parts[i], "--region") * scale;
  Box b{{v[0], v[2], v[4]}, {v[1], v[3], v[5]}};
  if (!(b.lo.array() <= b.hi.array()).all()) throw std::invalid_argument("--region needs lower <= upper on every axis");
  return b;
}

std::array<int, 3> parse_resolution(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw std::invalid_argument("--resolution expects nx,ny,nz");
  std::array<int, 3> r;
  for (int i = 0; i < 3; ++i) {
    const double v = number(parts[i], "--resolution");
    if (v < 1 || v != std::floor(v)) throw std::invalid_argument("--resolution entries must be positive integers");
    r[i] = static_cast<int>(v);
  }
  return r;
}

std::vector<double> parse_times(const std::string& s, double duration) {
  const auto parts = split(s, ',');
  if (parts.size() != 3 && parts.size() != 4) throw std::invalid_argument("--times expects t0,t1,n[,unit]");
  const double scale = parts.size() == 4 ? convert(1.0, parts[3], "s") : 1.0;
  const double t0 = number(parts[0], "--times") * scale;
  const double t1 = number(parts[1], "--times") * scale;
  const double n = number(parts[2], "--times");
  if (n < 1 || n != std::floor(n)) throw std::invalid_argument("--times: n must be a positive integer");
  if (!(t0 >= 0.0 && t1 >= t0 && t1 <= duration * (1 + 1e-12)))
    throw std::invalid_argument("--times must lie inside [0, duration] with t0 <= t1");
  std::vector<double> ts;
  const int count = static_cast<int>(n);
  for (int i = 0; i < count; ++i) ts.push_back(count == 1 ? t0 : t0 + (t1 - t0) * i / (count - 1));
  return ts;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sequence_text(const Sequence& s) {
  std::ostringstream o;
  o << std::setprecision(17) << "label=" << s.label << "\nduration=" << s.duration << '\n';
  for (const auto& r : s.ramps) {
    o << "ramp " << r.channel;
    for (const auto& [t, v] : r.points) o << ' ' << t << ':' << v;
    o << '\n';
  }
  return o.str() + serialize_layout(s.base_layout);
}

struct Context {
  std::vector<std::string> argv;
  json inputs = json::array();
  json outputs = json::array();
  std::optional<std::uint64_t> seed;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::ostream* out;
  std::ostream* err;

  void add_input(const std::string& role, const std::string& spec, const std::string& content) {
    inputs.push_back({{"role", role}, {"spec", spec}, {"sha256", sha256_hex(content)}});
  }

  ChipLayout layout(const std::string& spec) {
    ChipLayout l;
    if (spec.rfind(kBuiltin, 0) == 0) {
      l = resolve_layout(spec);
      add_input("layout", spec, serialize_layout(l));
    } else {
      const std::string text = read_file(spec);
      l = parse_layout(text);
      add_input("layout", spec, text);
    }
    const auto report = validate(l);
    for (const auto& d : report.diagnostics)
      *err << (d.severity == Severity::error ? "error: " : "warning: ") << (d.wire_id.empty() ? "" : d.wire_id + ": ")
           << d.message << '\n';
    if (report.has_errors()) throw ParseError("layout", "validation failed");
    return l;
  }

  Sequence sequence(const std::string& spec, double scale) {
    Sequence s;
    if (spec.rfind(kBuiltin, 0) == 0) {
      s = resolve_sequence(spec);
      add_input("sequence", spec, sequence_text(s));
    } else {
      const std::string text = read_file(spec);
      s = parse_sequence(text, fs::path(spec).parent_path().string());
      add_input("sequence", spec, text);
    }
    if (scale != 1.0) {
      if (!(scale > 0.0)) throw std::invalid_argument("--time-scale must be positive");
      s = time_scaled(s, scale);
    }
    return s;
  }

  std::vector<std::pair<std::string, std::string>> pending;

  // Outputs are staged and written together once the command has succeeded.
  void emit(const std::string& path, const std::string& content) {
    pending.emplace_back(path, content);
    outputs.push_back({{"path", path}, {"sha256", sha256_hex(content)}});
  }

  void commit(const std::string& out_path) {
    std::vector<std::string> written;
    try {
      for (const auto& [path, content] : pending) {
        write_atomically(path, content);
        written.push_back(path);
      }
      manifest(out_path);
    } catch (...) {
      std::error_code ec;
      for (const auto& path : written) fs::remove(path, ec);
      throw;
    }
  }

  void manifest(const std::string& out_path) {
    json m;
    m["command"] = argv;
    m["toolkit_version"] = ATOMCHIP_VERSION;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_atomically(out_path + ".manifest.json", m.dump(2) + "\n");
  }
};

FilamentPolicy policy(int n) {
  if (n < 0) throw std::invalid_argument("--filaments must be >= 0");
  return FilamentPolicy{n, 1};
}

struct Options {
  std::string layout, sequence, species = "li7-f2-mf2", region, resolution, times, temperature, dt, out, dump;
  std::string compression = "harmonic";
  std::size_t atoms = 1000;
  std::uint64_t seed = 0;
  bool gravity = false, jacobian = false, depth = false;
  double time_scale = 1.0;
  int filaments = -1;  // -1: command default
  int stride = 100;
};

int cmd_field_map(const Options& o, Context& ctx) {
  const ChipLayout layout = ctx.layout(o.layout);
  const FieldModel field(layout, policy(o.filaments < 0 ? 0 : o.filaments));
  const auto samples = grid_map(field, parse_region(o.region), parse_resolution(o.resolution), o.jacobian);
  std::ostringstream csv;
  write_grid_csv(csv, samples);
  ctx.emit(o.out, csv.str());
  std::size_t invalid = 0;
  for (const auto& s : samples) invalid += !s.valid;
  *ctx.out << samples.size() << " samples written to " << o.out;
  if (invalid) *ctx.out << " (" << invalid << " on a conductor)";
  *ctx.out << '\n';
  return kOk;
}

int cmd_trap(const Options& o, Context& ctx) {
  const ChipLayout layout = ctx.layout(o.layout);
  const PotentialModel model(species::by_name(o.species));
  const FieldModel field(layout, policy(o.filaments < 0 ? 0 : o.filaments));
  MinimizationConfig mc;
  CharacterizeOptions co;
  if (!o.region.empty()) {
    mc.region = parse_region(o.region);
    if (o.depth) co.depth_region = mc.region;
  } else {
    mc.seeds = default_seeds();
    if (o.depth) throw std::invalid_argument("--depth needs --region");
  }
  const Vec3 p = find_minimum(model, field, mc);
  const auto c = characterize(model, field, p, co);
  std::ostringstream text;
  text << "# layout " << o.layout << ", species " << model.species.label << '\n';
  write_characterization(text, c);
  ctx.emit(o.out, text.str());

  const auto depth = energy_views(c.depth_bias);
  *ctx.out << std::setprecision(6) << "trap (" << to_string(c.regime) << ") at height " << c.height() * 1e6
           << " um, |B|min " << c.B_min * 1e4 << " G, gradient " << c.gradient() * 1e-1 << " kG/cm\n";
  if (c.frequencies)
    *ctx.out << "frequencies " << (*c.frequencies)[0] << ", " << (*c.frequencies)[1] << ", " << (*c.frequencies)[2]
             << " Hz\n";
  *ctx.out << "depth " << depth.frequency_MHz << " MHz / " << depth.temperature_mK << " mK\n";
  for (const auto& d : c.diagnostics) *ctx.err << "note: " << d << '\n';
  return kOk;
}

int cmd_sequence(const Options& o, Context& ctx) {
  const Sequence seq = ctx.sequence(o.sequence, o.time_scale);
  const PotentialModel model(species::by_name(o.species));
  const auto times = o.times.empty() ? parse_times("0," + std::to_string(seq.duration) + ",31", seq.duration)
                                     : parse_times(o.times, seq.duration);
  TrackConfig tc;
  tc.filaments = policy(o.filaments < 0 ? 0 : o.filaments);
  const auto traj = track(seq, times, model, tc);
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  ctx.emit(o.out, csv.str());
  for (const auto& d : traj.diagnostics) *ctx.err << "note: " << d << '\n';

  if (!o.temperature.empty()) {
    const double T = quantity(o.temperature, "K", "--temperature");
    CompressionModel mode;
    if (o.compression == "harmonic")
      mode = CompressionModel::harmonic;
    else if (o.compression == "entropy")
      mode = CompressionModel::entropy;
    else
      throw std::invalid_argument("--compression must be harmonic or entropy");
    try {
      const auto report = compression_report(traj, T, model, mode);
      std::ostringstream text;
      write_compression_report(text, report);
      ctx.emit(o.out + ".compression.txt", text.str());
      *ctx.out << std::setprecision(6) << "density factor " << report.density_factor << ", temperature "
               << report.temperature_initial * 1e6 << " -> " << report.temperature_final * 1e6 << " uK\n";
    } catch (const RegimeMismatch& e) {
      *ctx.err << "compression report not applicable: " << e.what() << '\n';
    }
  }
  std::size_t present = 0;
  for (const auto& e : traj.entries) present += e.has_value();
  *ctx.out << present << " of " << times.size() << " times have a trap\n";
  return kOk;
}

int cmd_dynamics(const Options& o, Context& ctx) {
  const Sequence seq = ctx.sequence(o.sequence, o.time_scale);
  const PotentialModel model(species::by_name(o.species));
  if (o.temperature.empty()) throw std::invalid_argument("--temperature is required");
  const double T = quantity(o.temperature, "K", "--temperature");
  ctx.seed = o.seed;

  IntegratorConfig ic;
  ic.filaments = o.filaments < 0 ? FilamentPolicy::thin_wire() : policy(o.filaments);
  ic.gravity = o.gravity;
  ic.output_stride = o.stride;
  if (!o.region.empty()) ic.domain = parse_region(o.region);

  TrackConfig tc;
  tc.filaments = ic.filaments;
  const auto start = track(seq, {0.0}, model, tc);
  if (!start.entries[0]) throw NoConvergence("no trap at t = 0: " + start.diagnostics.front());
  if (o.dt.empty()) {
    const double fmax = max_trap_frequency(seq, model, ic.filaments, ic.track_points);
    if (!(fmax > 0.0)) throw RegimeMismatch("no harmonic trap along the sequence; give --dt");
    ic.dt = 1.0 / (50.0 * fmax);
  } else {
    ic.dt = quantity(o.dt, "s", "--dt");
  }

  const Ensemble ensemble = sample_thermal(*start.entries[0], model, T, o.atoms, o.seed);
  const SimResult result = integrate(ensemble, seq, model, ic);
  const Observables obs = observables(result);
  std::ostringstream csv;
  write_observables_csv(csv, obs);
  ctx.emit(o.out, csv.str());
  if (!o.dump.empty()) {
    std::ostringstream dump;
    write_dump_csv(dump, result);
    ctx.emit(o.dump, dump.str());
  }
  for (const auto& d : result.diagnostics) *ctx.err << "note: " << d << '\n';
  *ctx.out << std::setprecision(6) << result.steps << " steps of " << result.dt * 1e6 << " us; retained "
           << obs.retained_fraction.back() << ", T " << obs.temperature_mean.front() * 1e6 << " -> "
           << obs.temperature_mean.back() * 1e6 << " uK\n";
  return kOk;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_atomically(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + tmp.string() + "'");
    f << content;
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path + "'");
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Atom-chip magnetic microtrap toolkit", "atomchip"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ATOMCHIP_VERSION);
  Options o;

  auto* field_map = app.add_subcommand("field-map", "sample |B| on a grid");
  field_map->add_option("--layout", o.layout, "layout file or builtin:<name>")->required();
  field_map->add_option("--region", o.region, "x0,x1,y0,y1,z0,z1[,unit]")->required();
  field_map->add_option("--resolution", o.resolution, "nx,ny,nz")->required();
  field_map->add_option("--filaments", o.filaments, "filaments per wire, 0 = automatic");
  field_map->add_flag("--jacobian", o.jacobian, "also sample dB_i/dx_j");
  field_map->add_option("--out", o.out, "CSV path")->required();

  auto* trap = app.add_subcommand("trap", "find and characterize the trap minimum");
  trap->add_option("--layout", o.layout, "layout file or builtin:<name>")->required();
  trap->add_option("--species", o.species, "li7-f2-mf2, li7-f2-mf1 or li7-f1-mf-1");
  trap->add_option("--region", o.region, "search region x0,x1,y0,y1,z0,z1[,unit]");
  trap->add_option("--filaments", o.filaments, "filaments per wire, 0 = automatic");
  trap->add_flag("--depth", o.depth, "flood-fill barrier over --region");
  trap->add_option("--out", o.out, "key = value output path")->required();

  auto* sequence = app.add_subcommand("sequence", "track the trap through a sequence");
  sequence->add_option("--sequence", o.sequence, "sequence file or builtin:<name>")->required();
  sequence->add_option("--times", o.times, "t0,t1,n[,unit]");
  sequence->add_option("--species", o.species, "species preset");
  sequence->add_option("--time-scale", o.time_scale, "multiply all sequence times");
  sequence->add_option("--filaments", o.filaments, "filaments per wire, 0 = automatic");
  sequence->add_option("--temperature", o.temperature, "initial temperature value,unit for the compression report");
  sequence->add_option("--compression", o.compression, "harmonic or entropy");
  sequence->add_option("--out", o.out, "trajectory CSV path")->required();

  auto* dynamics = app.add_subcommand("dynamics", "classical ensemble through a sequence");
  dynamics->add_option("--sequence", o.sequence, "sequence file or builtin:<name>")->required();
  dynamics->add_option("--species", o.species, "species preset");
  dynamics->add_option("--atoms", o.atoms, "ensemble size");
  dynamics->add_option("--temperature", o.temperature, "value,unit")->required();
  dynamics->add_option("--seed", o.seed, "64-bit seed");
  dynamics->add_option("--dt", o.dt, "value,unit; default 1/(50 f_max)");
  dynamics->add_option("--time-scale", o.time_scale, "multiply all sequence times");
  dynamics->add_option("--stride", o.stride, "steps between recorded frames");
  dynamics->add_option("--region", o.region, "integration domain x0,x1,y0,y1,z0,z1[,unit]");
  dynamics->add_option("--filaments", o.filaments, "filaments per wire, default 1");
  dynamics->add_flag("--gravity", o.gravity, "include gravity along -z");
  dynamics->add_option("--dump", o.dump, "full trajectory dump CSV path");
  dynamics->add_option("--out", o.out, "observables CSV path")->required();

  std::vector<std::string> argv_store{"atomchip"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << ATOMCHIP_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  Context ctx;
  ctx.argv = args;
  ctx.out = &out;
  ctx.err = &err;
  try {
    int code;
    if (*field_map)
      code = cmd_field_map(o, ctx);
    else if (*trap)
      code = cmd_trap(o, ctx);
    else if (*sequence)
      code = cmd_sequence(o, ctx);
    else
      code = cmd_dynamics(o, ctx);
    ctx.commit(o.out);
    return code;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const TimestepTooLarge& e) {
    err << "error: " << e.what() << '\n';
    return kTimestepError;
  } catch (const NoConvergence& e) {
    err << "error: no trap found: " << e.what() << '\n';
    return kNoTrap;
  } catch (const EscapedDomain& e) {
    err << "error: no trap found: " << e.what() << '\n';
    return kNoTrap;
  } catch (const NotAMinimum& e) {
    err << "error: " << e.what() << '\n';
    return kNoTrap;
  } catch (const RegimeMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kNoTrap;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const UnknownLayout& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const UnknownSequence& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const UnknownUnit& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const IncompatibleUnits& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace atomchip::cli
