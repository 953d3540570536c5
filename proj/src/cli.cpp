#include "falsify/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "falsify/checks.hpp"

namespace falsify::cli {

namespace {

using boost::property_tree::ptree;

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  try {
    return boost::lexical_cast<T>(text);
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(key, "invalid value '" + text + "' for key '" + key + "'");
  }
}

std::vector<int> parse_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_value<int>(key, item));
  }
  return out;
}

template <typename Fn>
void wrap_invalid(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, "key '" + key + "': " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key,
                                  const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    const auto num = [](double SqpConfig::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.bench.sqp.*field = parse_value<double>(k, v);
      };
    };
    const auto text = [](std::string RunConfig::*field) {
      return [field](RunConfig& c, const std::string&, const std::string& v) {
        c.*field = v;
      };
    };

    t["problem.system"] = [](RunConfig& c, const std::string& k,
                             const std::string& v) {
      wrap_invalid(k, [&] { c.bench.system = benchmark_system_from_name(v); });
    };
    t["problem.dim"] = t["problem.dims"] =
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.bench.dims = parse_list(k, v);
        };
    t["problem.segments"] = [](RunConfig& c, const std::string& k,
                               const std::string& v) {
      c.bench.segment_counts = parse_list(k, v);
    };
    t["problem.horizon"] = [](RunConfig& c, const std::string& k,
                              const std::string& v) {
      c.bench.horizon = parse_value<double>(k, v);
    };
    t["problem.radius"] = [](RunConfig& c, const std::string& k,
                             const std::string& v) {
      c.bench.radius = parse_value<double>(k, v);
    };
    t["problem.perturbation"] = [](RunConfig& c, const std::string& k,
                                   const std::string& v) {
      c.bench.perturbation = parse_value<double>(k, v);
    };
    t["problem.eps4"] = [](RunConfig& c, const std::string& k,
                           const std::string& v) {
      c.bench.eps4 = parse_value<double>(k, v);
    };
    t["problem.jobs"] = [](RunConfig& c, const std::string& k,
                           const std::string& v) {
      c.bench.jobs = parse_value<int>(k, v);
    };

    t["formulation.name"] = [](RunConfig& c, const std::string& k,
                               const std::string& v) {
      wrap_invalid(k, [&] { c.bench.formulation = Formulation::from_name(v); });
    };
    t["formulation.hessian"] = [](RunConfig& c, const std::string& k,
                                  const std::string& v) {
      wrap_invalid(k, [&] {
        c.bench.sqp.hessian_variant = hessian_variant_from_name(v);
      });
    };
    t["formulation.kkt"] = [](RunConfig& c, const std::string& k,
                              const std::string& v) {
      wrap_invalid(k, [&] { c.bench.sqp.kkt_method = kkt_method_from_name(v); });
    };

    t["sqp.omega"] = num(&SqpConfig::omega);
    t["sqp.delta"] = num(&SqpConfig::delta);
    t["sqp.eps1"] = num(&SqpConfig::eps1);
    t["sqp.eps2"] = num(&SqpConfig::eps2);
    t["sqp.eps3"] = num(&SqpConfig::eps3);
    t["sqp.backtrack_factor"] = num(&SqpConfig::backtrack_factor);
    t["sqp.max_iter"] = [](RunConfig& c, const std::string& k,
                           const std::string& v) {
      c.bench.sqp.max_iter = parse_value<int>(k, v);
    };
    t["sqp.ppcg_tol"] = [](RunConfig& c, const std::string& k,
                           const std::string& v) {
      c.bench.sqp.ppcg.tol = parse_value<double>(k, v);
    };
    t["sqp.ppcg_max_iter"] = [](RunConfig& c, const std::string& k,
                                const std::string& v) {
      c.bench.sqp.ppcg.max_iter = parse_value<int>(k, v);
    };
    t["sqp.rel_tol"] = [](RunConfig& c, const std::string& k,
                          const std::string& v) {
      c.bench.sqp.integrator.rel_tol = parse_value<double>(k, v);
    };
    t["sqp.abs_tol"] = [](RunConfig& c, const std::string& k,
                          const std::string& v) {
      c.bench.sqp.integrator.abs_tol = parse_value<double>(k, v);
    };
    t["sqp.max_steps"] = [](RunConfig& c, const std::string& k,
                            const std::string& v) {
      c.bench.sqp.integrator.max_steps = parse_value<int>(k, v);
    };

    t["output.report"] = text(&RunConfig::report_path);
    t["output.csv"] = text(&RunConfig::csv_path);
    t["output.trace"] = text(&RunConfig::trace_path);
    t["output.trajectory"] = text(&RunConfig::trajectory_path);
    return t;
  }();
  return table;
}

void validate(const RunConfig& cfg) {
  try {
    cfg.bench.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", e.what());
  }
  if (cfg.bench.dims.empty()) throw ConfigError("problem.dims", "no dimension given");
  for (int n : cfg.bench.dims)
    wrap_invalid("problem.dims", [&] { make_system(cfg.bench.system, n); });
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << std::setprecision(17);
  return f;
}

nlohmann::json to_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

std::shared_ptr<spdlog::logger> logger() {
  static const auto log = [] {
    auto l = spdlog::stderr_color_mt("falsify");
    const char* env = std::getenv("FALSIFY_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    l->set_pattern("[%l] %v");
    return l;
  }();
  return log;
}

}  // namespace

void apply_config(RunConfig& cfg, std::istream& in) {
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed configuration: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError(section, "key '" + section + "' is outside any section");
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = setters().find(key);
      if (it == setters().end())
        throw ConfigError(key, "unknown configuration key '" + key + "'");
      it->second(cfg, key, value.get_value<std::string>());
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read configuration file '" + path + "'");
  RunConfig cfg;
  apply_config(cfg, in);
  return cfg;
}

ProblemInstance solve_instance(const RunConfig& cfg) {
  const BenchSpec& b = cfg.bench;
  if (b.dims.empty()) throw ConfigError("problem.dims", "no dimension given");
  if (b.segment_counts.empty())
    throw ConfigError("problem.segments", "no segment count given");
  return generate_instance(b.system, b.dims.front(), b.segment_counts.front(),
                           b.horizon, b.radius, b.sqp.integrator);
}

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const BenchSpec& b = cfg.bench;
  try {
    const ProblemInstance instance = solve_instance(cfg);
    const int N = b.segment_counts.front();
    const ShootingVector guess = initial_guess(instance, N, b.horizon,
                                               b.perturbation, b.sqp.integrator);
    const RunReport rep = run_sqp(b.formulation, instance, guess, b.sqp);
    const Verification v =
        verify(instance, rep.final_x, b.eps4, b.sqp.integrator);
    logger()->info("{} n={} N={} {}: {} after {} iterations, verification {}",
                   to_string(b.system), instance.dim(), N, b.formulation.name(),
                   to_string(rep.termination), rep.nit,
                   v.passed ? "passed" : "failed");

    nlohmann::json j;
    j["system"] = to_string(b.system);
    j["n"] = instance.dim();
    j["N"] = N;
    j["formulation"] = b.formulation.name();
    j["hessian"] = to_string(b.sqp.hessian_variant);
    j["kkt"] = to_string(b.sqp.kkt_method);
    j["nit"] = rep.nit;
    j["termination"] = to_string(rep.termination);
    j["status"] = bench_status(rep.termination, v);
    j["verification"] = {{"passed", v.passed},
                         {"failures", v.failures()},
                         {"init_distance", v.init_distance},
                         {"unsafe_distance", v.unsafe_distance},
                         {"total_time", v.total_time}};
    j["final_objective"] = rep.final_objective;
    j["final_constraint_norm"] = rep.final_constraint_norm;
    j["final_lagrangian_gradient_norm"] = rep.final_lagrangian_gradient_norm;
    j["hessian_skips"] = rep.hessian_skips;
    j["message"] = rep.message;
    j["durations"] = to_json(rep.final_x.durations());
    j["final_x"] = to_json(rep.final_x.packed());
    j["final_lambda"] = to_json(rep.final_lambda);

    if (cfg.report_path.empty()) {
      out << j.dump(2) << '\n';
    } else {
      auto f = open_output(cfg.report_path);
      f << j.dump(2) << '\n';
    }
    if (!cfg.trace_path.empty()) {
      auto f = open_output(cfg.trace_path);
      write_trace(f, rep.trace);
    }
    if (!cfg.trajectory_path.empty()) {
      auto f = open_output(cfg.trajectory_path);
      try {
        write_trajectory(f, instance, rep.final_x, 50, b.sqp.integrator);
      } catch (const IntegrationFailure& e) {
        logger()->warn("trajectory dump incomplete: {}", e.what());
      }
    }

    if (rep.termination != Termination::S1Converged) return kExitFailure;
    return v.passed ? kExitOk : kExitUnverified;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IntegrationFailure& e) {
    err << "integration failure: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::runtime_error& e) {
    err << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const std::vector<BenchRow> rows = run_table(cfg.bench);
    for (const auto& r : rows)
      logger()->info("n={} N={} NIT={} S={} {}", r.n, r.N, r.nit, r.status,
                     r.verification.failures());
    if (cfg.csv_path.empty()) {
      emit_csv(rows, out);
    } else {
      auto f = open_output(cfg.csv_path);
      emit_csv(rows, f);
      if (!f) throw std::runtime_error("write to '" + cfg.csv_path + "' failed");
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kExitFailure;
  }
}

int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const BenchSpec& b = cfg.bench;
  try {
    const ProblemInstance instance = solve_instance(cfg);
    ShootingVector x = initial_guess(instance, b.segment_counts.front(),
                                     b.horizon, b.perturbation,
                                     b.sqp.integrator);
    if (cfg.rig_center) x.set_start(0, instance.init.center);

    bool all = true;
    out << std::left << std::setw(26) << "check" << std::setw(14) << "value"
        << std::setw(10) << "tolerance" << "result\n";
    for (const CheckResult& r : run_checks(b.formulation, instance, x)) {
      all = all && r.passed;
      std::ostringstream value, tol;
      value << std::scientific << std::setprecision(3) << r.value;
      tol << std::scientific << std::setprecision(0) << r.tolerance;
      out << std::left << std::setw(26) << r.name << std::setw(14)
          << value.str() << std::setw(10) << tol.str()
          << (r.passed ? "PASS" : "FAIL");
      if (!r.detail.empty()) out << "  " << r.detail;
      out << '\n';
    }
    return all ? kExitOk : kExitFailure;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kExitFailure;
  }
}

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Falsification of ODE safety properties by multiple-shooting SQP"};
  app.require_subcommand(1);

  std::string config_path, formulation, hessian, kkt, trace, trajectory,
      report, csv;
  int jobs = 0;
  bool rig = false;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI configuration file");
    sub->add_option("--formulation", formulation, "eq5 ... eq13");
    sub->add_option("--hessian", hessian, "full, blockdiag or banded");
    sub->add_option("--kkt", kkt, "ppcg or direct");
  };
  CLI::App* solve = app.add_subcommand("solve", "Run one SQP solve");
  common(solve);
  solve->add_option("--trace", trace, "Per-iteration JSON lines");
  solve->add_option("--dump-trajectory", trajectory, "Sampled trajectory");
  solve->add_option("--report", report, "JSON report (default stdout)");
  CLI::App* bench = app.add_subcommand("bench", "Run a benchmark table");
  common(bench);
  bench->add_option("--jobs", jobs, "Concurrent cells")->check(CLI::PositiveNumber);
  bench->add_option("--csv", csv, "CSV output (default stdout)");
  CLI::App* check = app.add_subcommand("check", "Run derivative and solver self-checks");
  common(check);
  check->add_flag("--rig-center", rig, "Place x0^1 at the centre of Init");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (!formulation.empty())
      wrap_invalid("--formulation",
                   [&] { cfg.bench.formulation = Formulation::from_name(formulation); });
    if (!hessian.empty())
      wrap_invalid("--hessian", [&] {
        cfg.bench.sqp.hessian_variant = hessian_variant_from_name(hessian);
      });
    if (!kkt.empty())
      wrap_invalid("--kkt",
                   [&] { cfg.bench.sqp.kkt_method = kkt_method_from_name(kkt); });
    if (!trace.empty()) cfg.trace_path = trace;
    if (!trajectory.empty()) cfg.trajectory_path = trajectory;
    if (!report.empty()) cfg.report_path = report;
    if (!csv.empty()) cfg.csv_path = csv;
    if (jobs > 0) cfg.bench.jobs = jobs;
    cfg.rig_center = rig;
    validate(cfg);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  }

  if (solve->parsed()) return cmd_solve(cfg, out, err);
  if (bench->parsed()) return cmd_bench(cfg, out, err);
  return cmd_check(cfg, out, err);
}

}  // namespace falsify::cli
