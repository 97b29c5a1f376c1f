#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "atomchip/cli.hpp"
#include "atomchip/layout.hpp"

using namespace atomchip;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "atomchip_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

double number_after(const std::string& text, const std::string& key) {
  const auto at = text.find(key);
  REQUIRE(at != std::string::npos);
  return std::stod(text.substr(at + key.size()));
}

}  // namespace

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  write(dir / "broken.json", "{\"label\": \"x\", \"wires\": [");
  auto r = run({"trap", "--layout", (dir / "broken.json").string(), "--out", (dir / "t.txt").string()});
  CHECK(r.code == cli::kInputError);
  CHECK(!r.err.empty());
  CHECK(!fs::exists(dir / "t.txt"));

  r = run({"trap", "--layout", (dir / "missing.json").string(), "--out", (dir / "t.txt").string()});
  CHECK(r.code == cli::kIoError);

  r = run({"trap", "--layout", "builtin:no-such", "--out", (dir / "t.txt").string()});
  CHECK(r.code == cli::kInputError);

  r = run({"trap", "--out", (dir / "t.txt").string()});
  CHECK(r.code == cli::kInputError);

  write(dir / "bias.json", serialize_layout(builtin_layout("side-guide", {{"current", 0.0}})));
  r = run({"trap", "--layout", (dir / "bias.json").string(), "--out", (dir / "t.txt").string()});
  CHECK(r.code == cli::kNoTrap);
  CHECK(r.err.find("no trap") != std::string::npos);
  CHECK(!fs::exists(dir / "t.txt"));
  CHECK(!fs::exists(dir / "t.txt.manifest.json"));

  r = run({"dynamics", "--sequence", "builtin:fig4-transfer", "--temperature", "1,uK", "--atoms", "10", "--dt", "1,ms",
           "--out", (dir / "d.csv").string()});
  CHECK(r.code == cli::kTimestepError);
  CHECK(!fs::exists(dir / "d.csv"));

  r = run({"trap", "--layout", "builtin:z-trap-10", "--out", (dir / "no-such-dir" / "t.txt").string()});
  CHECK(r.code == cli::kIoError);
}

TEST_CASE("field-map of the side guide finds the minimum at 10 um") {
  const auto dir = scratch("fieldmap");
  const auto out = dir / "map.csv";
  const auto r = run({"field-map", "--layout", "builtin:side-guide", "--region", "-50,50,0,0,1,101,um", "--resolution",
                      "101,1,101", "--out", out.string()});
  REQUIRE(r.code == cli::kOk);
  const auto rows = csv_rows(slurp(out));
  REQUIRE(rows.size() == 1 + 101 * 101);
  CHECK(rows[0] == std::vector<std::string>{"x", "y", "z", "Bx", "By", "Bz", "Bnorm"});
  double best = std::numeric_limits<double>::infinity(), bx = 0, bz = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double b = std::stod(rows[i][6]);
    if (b < best) {
      best = b;
      bx = std::stod(rows[i][0]);
      bz = std::stod(rows[i][2]);
    }
  }
  CHECK(std::abs(bz - 10e-6) <= 1.001e-6);
  CHECK(std::abs(bx) <= 1e-6);
  CHECK(fs::exists(fs::path(out.string() + ".manifest.json")));
}

TEST_CASE("field-map of a zero-current layout is uniform") {
  const auto dir = scratch("uniform");
  write(dir / "zero.json", serialize_layout(builtin_layout("z-trap-10", {{"current", 0.0}})));
  const auto r = run({"field-map", "--layout", (dir / "zero.json").string(), "--region", "-1,1,-1,1,0.1,1,mm",
                      "--resolution", "5,5,5", "--out", (dir / "map.csv").string()});
  REQUIRE(r.code == cli::kOk);
  const auto rows = csv_rows(slurp(dir / "map.csv"));
  REQUIRE(rows.size() == 126);
  for (std::size_t i = 2; i < rows.size(); ++i) CHECK(rows[i][6] == rows[1][6]);
}

TEST_CASE("trap command") {
  const auto dir = scratch("trap");
  auto r = run({"trap", "--layout", "builtin:z-trap-10", "--out", (dir / "z.txt").string()});
  REQUIRE(r.code == cli::kOk);
  const std::string text = slurp(dir / "z.txt");
  CHECK(number_after(text, "frequency_1 = ") > 1e5);
  CHECK(number_after(text, "frequency_2 = ") > 1e5);
  CHECK(number_after(text, "ground_state_size_2 = ") <= 150e-9);

  // Under-chip U: 8 G bias, |m_F g_F| = 1/2.
  r = run({"trap", "--layout", "builtin:under-chip-u", "--species", "li7-f2-mf1", "--out", (dir / "u.txt").string()});
  REQUIRE(r.code == cli::kOk);
  // Printed to two significant figures: 5.6 MHz / 0.27 mK.
  CHECK(std::round(number_after(r.out, "depth ") * 10) / 10 == 5.6);
  CHECK(std::round(number_after(r.out, "MHz / ") * 100) / 100 == 0.27);
  const std::string u = slurp(dir / "u.txt");
  CHECK(number_after(u, "depth_bias_MHz = ") == doctest::Approx(5.597).epsilon(1e-3));
  CHECK(number_after(u, "depth_bias_mK = ") == doctest::Approx(0.2686).epsilon(1e-3));
}

TEST_CASE("sequence command: fig4 height falls over 50 points") {
  const auto dir = scratch("sequence");
  const auto r = run({"sequence", "--sequence", "builtin:fig4-transfer", "--times", "0,30,50,ms", "--out",
                      (dir / "traj.csv").string()});
  REQUIRE(r.code == cli::kOk);
  const auto rows = csv_rows(slurp(dir / "traj.csv"));
  REQUIRE(rows.size() == 51);
  CHECK(rows[0][5] == "z");
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i][1] == "1");
    const double z = std::stod(rows[i][5]);
    CHECK(z < previous);
    previous = z;
  }
}

TEST_CASE("dynamics runs are reproducible and carry manifests") {
  const auto dir = scratch("dynamics");
  auto args = [&](const std::string& name) {
    return std::vector<std::string>{"dynamics", "--sequence", "builtin:fig4-transfer", "--time-scale", "0.01",
                                    "--temperature", "1,uK", "--atoms", "50", "--seed", "17", "--out",
                                    (dir / name).string()};
  };
  REQUIRE(run(args("a.csv")).code == cli::kOk);
  REQUIRE(run(args("b.csv")).code == cli::kOk);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  const auto ma = nlohmann::json::parse(slurp(dir / "a.csv.manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(dir / "b.csv.manifest.json"));
  CHECK(ma["outputs"][0]["sha256"] == cli::sha256_hex(slurp(dir / "a.csv")));
  CHECK(ma["outputs"][0]["sha256"] == mb["outputs"][0]["sha256"]);
  CHECK(ma["inputs"][0]["sha256"] == mb["inputs"][0]["sha256"]);
  CHECK(ma["seed"] == 17);
  CHECK(ma.contains("toolkit_version"));
  CHECK(ma.contains("wall_time_s"));
}

TEST_CASE("dynamics: a 100x faster transfer ends hotter") {
  const auto dir = scratch("fastslow");
  auto final_temperature = [&](const std::string& scale, const std::string& name) {
    const auto r = run({"dynamics", "--sequence", "builtin:fig4-transfer", "--time-scale", scale, "--temperature",
                        "1,uK", "--atoms", "100", "--seed", "3", "--stride", "100000", "--out", (dir / name).string()});
    REQUIRE(r.code == cli::kOk);
    const auto rows = csv_rows(slurp(dir / name));
    REQUIRE(rows[0][2] == "T_x");
    double sum = 0;
    for (int i = 2; i <= 4; ++i) sum += std::stod(rows.back()[i]);
    return sum / 3;
  };
  const double slow = final_temperature("0.05", "slow.csv");
  const double fast = final_temperature("0.0005", "fast.csv");
  CHECK(fast > slow);
}

TEST_CASE("sha256 of a known string") {
  CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
