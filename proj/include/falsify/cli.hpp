#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "falsify/bench.hpp"

namespace falsify::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnverified = 1;
inline constexpr int kExitFailure = 2;
inline constexpr int kExitConfig = 64;

/// Bad configuration; `key()` names the offending "section.key" when there
/// is one.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  BenchSpec bench;           // problem, formulation and solver settings
  std::string report_path;   // solve: JSON report, stdout when empty
  std::string csv_path;      // bench: CSV table, stdout when empty
  std::string trace_path;    // solve: per-iteration JSON lines
  std::string trajectory_path;
  bool rig_center = false;   // check: force x0^1 = c_I
};

/// INI file with sections [problem], [formulation], [sqp] and [output].
/// Unknown sections, unknown keys and unparsable values throw ConfigError.
RunConfig load_config(const std::string& path);
void apply_config(RunConfig& cfg, std::istream& in);

/// The instance and starting point used by `solve` and `check`: the first
/// configured dimension and segment count.
ProblemInstance solve_instance(const RunConfig& cfg);

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full command line: `falsify solve|bench|check [options]`.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace falsify::cli
