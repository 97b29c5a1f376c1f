#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "atomchip/errors.hpp"
#include "atomchip/sequences.hpp"

using namespace atomchip;
using doctest::Approx;

namespace {

constexpr double um = 1e-6, mm = 1e-3, G = 1e-4;

const PotentialModel kModel{species::li7_f2_mf2()};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> t;
  for (int i = 0; i < n; ++i) t.push_back(a + (b - a) * i / (n - 1));
  return t;
}

double channel(const ChipLayout& l, const std::string& id) { return l.find_wire(id)->current; }

// Harmonic endpoint with given mean frequency.
TrapCharacterization harmonic(double f) {
  TrapCharacterization c;
  c.regime = Regime::harmonic;
  c.B_min = 1e-4;
  c.frequencies = std::array<double, 3>{f, f, f};
  c.depth_bias = Energy::from_kelvin(1.0);
  return c;
}

}  // namespace

TEST_CASE("ramp interpolation") {
  const Ramp r{"u1", {{0.0, 2.0}, {1.0, 0.5}}};
  CHECK(r.value_at(0.5) == Approx(1.25).epsilon(1e-15));
  CHECK(r.value_at(-1.0) == 2.0);
  CHECK(r.value_at(5.0) == 0.5);
  CHECK(r.max_slope() == Approx(1.5));
}

TEST_CASE("fig4 transfer stages") {
  const auto s = builtin_sequence("fig4-transfer");
  const double T = kDefaultStageTime;
  CHECK(s.duration == Approx(3 * T));
  const auto i = instantiate(s, 0.0);
  CHECK(channel(i, "u1") == 2.0);
  CHECK(channel(i, "u2") == 2.0);
  CHECK(channel(i, "thin") == 0.3);
  const auto ii = instantiate(s, T);
  CHECK(channel(ii, "u1") == Approx(0.5));
  CHECK(channel(instantiate(s, 0.5 * T), "u1") == Approx(1.25));
  const auto iii = instantiate(s, 2 * T);
  CHECK(channel(iii, "u1") == 0.0);
  CHECK(channel(iii, "thin") == 0.3);
  const auto iv = instantiate(s, 3 * T);
  CHECK(iv.bias.vector.norm() > iii.bias.vector.norm());
  CHECK_THROWS_AS(instantiate(s, -1e-9), TimeOutOfRange);
  CHECK_THROWS_AS(instantiate(s, 3 * T + 1e-9), TimeOutOfRange);
}

TEST_CASE("fig3 loading stages") {
  const auto s = builtin_sequence("fig3-loading");
  const double T = kDefaultStageTime;
  const auto a = instantiate(s, 0.0);
  CHECK(channel(a, "underchip") == 16.0);
  CHECK(a.bias.vector.norm() == Approx(8 * G));
  const auto b = instantiate(s, T);
  CHECK(std::abs(b.bias.vector.x()) == Approx(19 * G));
  CHECK(channel(b, "underchip") == 16.0);
  const auto c = instantiate(s, 2 * T);
  CHECK(channel(c, "underchip") == 0.0);
  CHECK(channel(c, "u1") == 2.0);
  const auto e = instantiate(s, 4 * T);
  CHECK(channel(e, "thin") == 0.3);
  CHECK(channel(e, "u1") == 0.0);
}

TEST_CASE("instantiate is Lipschitz in time") {
  for (const auto& name : builtin_sequence_names()) {
    const auto s = builtin_sequence(name);
    double L = 0;
    for (const auto& r : s.ramps) L = std::max(L, r.max_slope());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, s.duration);
    for (int k = 0; k < 200; ++k) {
      const double t = u(rng), d = 1e-5 * s.duration;
      if (t + d > s.duration) continue;
      const auto a = instantiate(s, t), b = instantiate(s, t + d);
      for (std::size_t w = 0; w < a.wires.size(); ++w)
        CHECK(std::abs(a.wires[w].current - b.wires[w].current) <= L * d * (1 + 1e-9));
      CHECK((a.bias.vector - b.bias.vector).cwiseAbs().maxCoeff() <= L * d * (1 + 1e-9));
    }
  }
}

TEST_CASE("time scaling and reversal") {
  const auto s = builtin_sequence("fig4-transfer");
  const auto f = time_scaled(s, 0.01);
  CHECK(f.duration == Approx(0.01 * s.duration));
  const auto r = reversed(s);
  for (double t : linspace(0, s.duration, 13)) {
    const auto a = instantiate(s, t), b = instantiate(f, 0.01 * t), c = instantiate(r, s.duration - t);
    for (std::size_t w = 0; w < a.wires.size(); ++w) {
      CHECK(b.wires[w].current == Approx(a.wires[w].current).epsilon(1e-12));
      CHECK(c.wires[w].current == Approx(a.wires[w].current).epsilon(1e-12));
    }
    CHECK((c.bias.vector - a.bias.vector).norm() <= 1e-15);
  }
}

TEST_CASE("sequence invariants are enforced") {
  auto s = builtin_sequence("fig4-transfer");
  auto bad = s;
  bad.ramps[0].points = {{1.0, 0.0}, {0.5, 1.0}};
  CHECK_THROWS_AS(check_sequence(bad), ParseError);
  bad = s;
  bad.ramps.push_back(s.ramps[0]);
  CHECK_THROWS_AS(check_sequence(bad), ParseError);
  bad = s;
  bad.ramps[0].channel = "nonexistent";
  CHECK_THROWS_AS(check_sequence(bad), ParseError);
  bad = s;
  bad.duration = 0.5 * s.duration;
  CHECK_THROWS_AS(check_sequence(bad), ParseError);
  CHECK_THROWS_AS(builtin_sequence("fig9"), UnknownSequence);
}

TEST_CASE("sequence file parsing") {
  const auto dir = std::filesystem::temp_directory_path() / "atomchip_seq_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "guide.json") << serialize_layout(builtin_layout("side-guide"));
  }
  const std::string text = R"({
    "base_layout": "guide.json",
    "duration": {"value": 20, "unit": "ms"},
    "ramps": [
      {"channel": "guide", "points": [[0, 200], [10, 100]], "units": {"t": "ms", "value": "mA"}},
      {"channel": "bias.x", "points": [[5, -40], [20, -20]], "units": {"t": "ms", "value": "G"}}
    ]})";
  const auto s = parse_sequence(text, dir.string());
  CHECK(s.duration == Approx(0.02));
  CHECK(channel(instantiate(s, 5e-3), "guide") == Approx(0.15));
  CHECK(instantiate(s, 0.0).bias.vector.x() == Approx(-40 * G));
  CHECK(instantiate(s, 12.5e-3).bias.vector.x() == Approx(-30 * G));

  const auto b = parse_sequence(R"({"base_layout": "builtin:side-guide", "duration": {"value": 1, "unit": "s"}, "ramps": []})");
  CHECK(b.base_layout.label == "side-guide");

  CHECK_THROWS_AS(parse_sequence(R"({"base_layout": "builtin:side-guide", "ramps": []})"), MissingField);
  CHECK_THROWS_AS(parse_sequence(R"({"base_layout": "builtin:side-guide", "duration": {"value": 1, "unit": "G"}, "ramps": []})"),
                  ParseError);
  CHECK_THROWS_AS(parse_sequence(R"({"base_layout": "missing.json", "duration": {"value": 1, "unit": "s"}, "ramps": []})",
                                 dir.string()),
                  IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("fig4 tracking: the trap moves onto the thin wire and compresses") {
  const auto s = builtin_sequence("fig4-transfer");
  const auto times = linspace(0, s.duration, 31);
  const auto traj = track(s, times, kModel);
  REQUIRE(traj.entries.size() == times.size());
  for (const auto& e : traj.entries) REQUIRE(e);
  for (std::size_t k = 1; k < times.size(); ++k) {
    CAPTURE(times[k]);
    CHECK(traj.entries[k]->height() < traj.entries[k - 1]->height());
    CHECK(traj.entries[k]->gradient() > traj.entries[k - 1]->gradient());
  }
  const auto& first = *traj.entries.front();
  const auto& stage3 = *traj.entries[20];
  const auto& last = *traj.entries.back();
  CHECK(times[20] == Approx(2 * kDefaultStageTime));
  // Distance in the x-z plane to the thin bar (x = 0) and to the U bars (x = +-115 um).
  auto to_bar = [](const TrapCharacterization& c, double x) { return std::hypot(c.position.x() - x, c.position.z()); };
  CHECK(to_bar(stage3, 0) < to_bar(first, 0));
  CHECK(to_bar(stage3, 0) < to_bar(stage3, 115 * um));
  CHECK(to_bar(stage3, 0) < to_bar(stage3, -115 * um));
  CHECK(last.height() < stage3.height());
  CHECK(last.gradient() > stage3.gradient());
  CHECK(last.regime == Regime::harmonic);
  CHECK(last.mean_frequency() > first.mean_frequency());
}

TEST_CASE("constant sequence gives identical characterizations") {
  Sequence s;
  s.base_layout = builtin_layout("z-trap-10");
  s.duration = 1e-3;
  const auto traj = track(s, linspace(0, s.duration, 5), kModel);
  for (const auto& e : traj.entries) {
    REQUIRE(e);
    CHECK(e->position == traj.entries[0]->position);
    CHECK(e->B_min == traj.entries[0]->B_min);
    CHECK(*e->frequencies == *traj.entries[0]->frequencies);
  }
}

TEST_CASE("continuation agrees with a fresh search at the final time") {
  for (const auto& name : builtin_sequence_names()) {
    CAPTURE(name);
    const auto s = builtin_sequence(name);
    const auto traj = track(s, linspace(0, s.duration, 21), kModel);
    REQUIRE(traj.last());
    const auto fresh = track(s, {s.duration}, kModel);
    REQUIRE(fresh.last());
    CHECK((traj.last()->position - fresh.last()->position).norm() < 1e-8);
  }
}

TEST_CASE("onchip-bias demo: chip currents alone make a bias and a trap") {
  const auto s = builtin_sequence("onchip-bias-demo");
  const auto l = instantiate(s, 0.0);
  CHECK(l.bias.vector.norm() == 0.0);
  auto no_thin = l;
  no_thin.find_wire("thin")->current = 0.0;
  const Vec3 B = total_field(no_thin, {0, 0, 20 * um});
  // Parallel to the surface, and large compared with its normal component.
  CHECK(std::hypot(B.x(), B.y()) > 1 * G);
  CHECK(std::hypot(B.x(), B.y()) > 10 * std::abs(B.z()));
  const auto traj = track(s, {0.0, s.duration}, kModel);
  for (const auto& e : traj.entries) {
    REQUIRE(e);
    CHECK(e->height() > 0);
  }
}

TEST_CASE("compression report: harmonic law") {
  const auto one = compression_report(harmonic(1e3), harmonic(1e3), 1e-6, kModel);
  CHECK(one.temperature_factor == Approx(1.0));
  CHECK(one.density_factor == Approx(1.0));
  CHECK(one.temperature_final == Approx(1e-6));

  const auto fifty = compression_report(harmonic(1e3), harmonic(50e3), 1e-6, kModel);
  CHECK(fifty.density_factor == Approx(std::pow(50.0, 1.5)).epsilon(1e-12));
  CHECK(std::abs(fifty.density_factor - 354) <= 1);
  CHECK(fifty.temperature_factor == Approx(50.0));

  // Entropy mode reduces to the harmonic law between harmonic endpoints.
  const auto e = compression_report(harmonic(1e3), harmonic(50e3), 1e-6, kModel, CompressionModel::entropy);
  CHECK(e.density_factor == Approx(fifty.density_factor).epsilon(1e-9));
  CHECK(e.temperature_factor == Approx(fifty.temperature_factor).epsilon(1e-9));

  auto quad = harmonic(1e3);
  quad.regime = Regime::linear_quadrupole;
  quad.frequencies.reset();
  CHECK_THROWS_AS(compression_report(quad, harmonic(1e3), 1e-6, kModel), RegimeMismatch);

  const auto hot = compression_report(harmonic(1e3), harmonic(50e3), 5e-3, kModel);
  CHECK(hot.loss_risk);
  CHECK(!fifty.loss_risk);
}

TEST_CASE("compression report: reparameterization and reversal") {
  const auto s = builtin_sequence("fig4-transfer");
  const auto times = linspace(0, s.duration, 7);
  const auto fwd = compression_report(track(s, times, kModel), 1e-6, kModel);
  auto scaled_times = times;
  for (auto& t : scaled_times) t *= 3.0;
  const auto slow = compression_report(track(time_scaled(s, 3.0), scaled_times, kModel), 1e-6, kModel);
  CHECK(slow.density_factor == Approx(fwd.density_factor).epsilon(1e-6));
  const auto back = compression_report(track(reversed(s), times, kModel), 1e-6, kModel);
  CHECK(back.temperature_factor * fwd.temperature_factor == Approx(1.0).epsilon(1e-6));
  CHECK(fwd.temperature_factor > 1.0);
}

TEST_CASE("compression report: full loading sequence") {
  const auto s = builtin_sequence("fig3-loading");
  const auto traj = track(s, linspace(0, s.duration, 41), kModel);
  REQUIRE(traj.first());
  CHECK(traj.first()->regime == Regime::linear_quadrupole);
  CHECK(traj.last()->regime == Regime::harmonic);
  CHECK_THROWS_AS(compression_report(traj, 200e-6, kModel), RegimeMismatch);
  const auto r = compression_report(traj, 200e-6, kModel, CompressionModel::entropy);
  CHECK(r.density_factor >= 50);
  CHECK(r.density_factor <= 1000);
  CHECK(r.temperature_final > r.temperature_initial);

  std::ostringstream out;
  write_compression_report(out, r);
  CHECK(out.str().find("density_factor") != std::string::npos);
}

TEST_CASE("trajectory export") {
  const auto s = builtin_sequence("fig4-transfer");
  std::ostringstream out;
  write_trajectory_csv(out, track(s, linspace(0, s.duration, 4), kModel));
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("t,present,regime,x,y,z", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}
