#pragma once

// Command-line front end: JSON config parsing and the subcommand drivers.
// Exit codes: 0 success, 1 check failure, 2 usage or config error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dlab/gradcheck.hpp"
#include "dlab/trainlab.hpp"

namespace dlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using json = nlohmann::json;

// Strict view of a JSON object: every key must be read before finish().
class ConfigObject {
 public:
  ConfigObject(const json& j, std::string where);

  bool has(const std::string& key) const;
  const json& raw(const std::string& key);
  ConfigObject child(const std::string& key);

  double number(const std::string& key, double fallback);
  std::size_t count(const std::string& key, std::size_t fallback);
  bool flag(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback);
  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& fallback);

  // Throws ConfigError naming the first key that was never read.
  void finish() const;
  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const json* j_;
  std::string where_;
  std::set<std::string> used_;
};

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  bool plot = false;

  std::filesystem::path out_or_default() const { return out.value_or("runs"); }
};

// Parsed config file, or an empty object when no --config was given.
json load_config(const std::optional<std::filesystem::path>& path);

kd::NormScheme parse_norm(const json& j, const std::string& where);
kd::DistanceSpec parse_distance(const json& j, const std::string& where);
lab::ProjectorSpec parse_projector(ConfigObject o, lab::ProjectorSpec base);
// Reads ExperimentSpec keys (the same layout summary.json echoes) from `o`.
void read_experiment_spec(ConfigObject& o, lab::ExperimentSpec& spec);
void read_equivariance_spec(ConfigObject& o, lab::EquivarianceSpec& spec);
gc::SuiteOptions parse_gradcheck(const json& j);

int cmd_gradcheck(const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_dynamics(const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_experiment(const std::string& id, const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_equivariance(const GlobalOptions& g, std::ostream& out, std::ostream& err);
int cmd_lowrank(const GlobalOptions& g, std::ostream& out, std::ostream& err);

const std::vector<std::string>& experiment_ids();

// Full command line; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dlab::cli
