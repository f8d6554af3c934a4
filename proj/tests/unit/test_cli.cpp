#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using dlab::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "dlab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dlab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

bool any_svg(const fs::path& root) {
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().extension() == ".svg") return true;
  return false;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  const fs::path dir = scratch("usage");
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"gradcheck", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(invoke({"gradcheck", "--config", write_text(dir / "bad.json", "{ not json").string()}).code == 2);
  const auto unknown = invoke({"gradcheck", "--config", write_text(dir / "u.json", R"({"instancez": 3})").string()});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("instancez") != std::string::npos);
  CHECK(invoke({"gradcheck", "--config", write_text(dir / "h.json", R"({"h": -1})").string()}).code == 2);
  CHECK(invoke({"experiment", "nope", "--out", dir.string()}).code == 2);
  CHECK(invoke({"lowrank", "--out", dir.string(), "--config", write_text(dir / "r.json", R"({"ranks": [99]})").string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck reports every component") {
  const fs::path dir = scratch("gradcheck");
  const auto ok = invoke({"gradcheck", "--out", dir.string()});
  CHECK(ok.code == 0);
  std::ifstream is(dir / "gradcheck.json");
  const auto j = nlohmann::json::parse(is);
  REQUIRE(j.contains("components"));
  CHECK(j["components"].size() >= 6);
  const auto strict = invoke({"gradcheck", "--config", write_text(dir / "t.json", R"({"tolerance": 1e-20, "instances": 2, "velocity_instances": 2})").string()});
  CHECK(strict.code == 1);
  fs::remove_all(dir);
}

TEST_CASE("dynamics reruns are byte-identical and plots are opt-in") {
  const fs::path dir = scratch("dynamics");
  const fs::path cfg = write_text(dir / "d.json", R"({"steps": 40, "record_every": 10, "rows": 32})");
  const fs::path a = dir / "a", b = dir / "b", c = dir / "c";
  REQUIRE(invoke({"dynamics", "--config", cfg.string(), "--out", a.string(), "--seed", "3"}).code == 0);
  REQUIRE(invoke({"dynamics", "--config", cfg.string(), "--out", b.string(), "--seed", "3"}).code == 0);
  const auto sa = snapshot(a);
  CHECK(sa == snapshot(b));
  CHECK(sa.count("dynamics/trajectory.csv") == 1);
  CHECK(sa.count("dynamics/summary.json") == 1);
  CHECK(!any_svg(a));
  REQUIRE(invoke({"dynamics", "--config", cfg.string(), "--out", c.string(), "--seed", "4", "--plot"}).code == 0);
  CHECK(any_svg(c));
  CHECK(snapshot(c).at("dynamics/trajectory.csv") != sa.at("dynamics/trajectory.csv"));
  fs::remove_all(dir);
}

TEST_CASE("lowrank and equivariance commands") {
  const fs::path dir = scratch("misc");
  const fs::path lr = write_text(dir / "lr.json", R"({"instances": 2, "ranks": [1, 2]})");
  CHECK(invoke({"lowrank", "--config", lr.string(), "--out", dir.string()}).code == 0);
  CHECK(fs::exists(dir / "lowrank" / "lowrank.csv"));
  const fs::path eqc = write_text(dir / "eq.json", R"({"map": "conv_mixer", "num_inputs": 2, "batch": 2})");
  CHECK(invoke({"equivariance", "--config", eqc.string(), "--out", dir.string()}).code == 0);
  std::ifstream is(dir / "equivariance" / "report.json");
  const auto j = nlohmann::json::parse(is);
  CHECK(j["mean"].get<double>() <= 1e-12);
  fs::remove_all(dir);
}
