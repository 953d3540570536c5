#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "falsify/cli.hpp"

using namespace falsify;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("falsify_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& body = {}) const {
    const fs::path p = path / name;
    if (!body.empty()) std::ofstream(p) << body;
    return p.string();
  }
};

int run(std::vector<std::string> args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  args.insert(args.begin(), "falsify");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST_CASE("configuration parsing") {
  std::istringstream in(
      "[problem]\nsystem = benchmark3\ndims = 4, 10\nsegments = 5,10\n"
      "horizon = 4\n[formulation]\nname = eq9\nhessian = full\nkkt = direct\n"
      "[sqp]\neps1 = 1e-4\nmax_iter = 12\nrel_tol = 1e-10\n"
      "[output]\ncsv = table.csv\n");
  cli::RunConfig cfg;
  cli::apply_config(cfg, in);
  CHECK(cfg.bench.system == BenchmarkSystem::Benchmark3);
  CHECK(cfg.bench.dims == std::vector<int>{4, 10});
  CHECK(cfg.bench.segment_counts == std::vector<int>{5, 10});
  CHECK(cfg.bench.horizon == 4.0);
  CHECK(cfg.bench.formulation.equation() == 9);
  CHECK(cfg.bench.sqp.hessian_variant == HessianVariant::FullDense);
  CHECK(cfg.bench.sqp.kkt_method == KktMethod::Direct);
  CHECK(cfg.bench.sqp.eps1 == 1e-4);
  CHECK(cfg.bench.sqp.max_iter == 12);
  CHECK(cfg.bench.sqp.integrator.rel_tol == 1e-10);
  CHECK(cfg.csv_path == "table.csv");

  cli::RunConfig defaults;
  CHECK(defaults.bench.sqp.omega == 1.0);
  CHECK(defaults.bench.sqp.delta == 1e-4);
  CHECK(defaults.bench.sqp.eps2 == 1e-8);
  CHECK(defaults.bench.sqp.eps3 == 1e-8);
  CHECK(defaults.bench.sqp.max_iter == 400);
  CHECK(defaults.bench.eps4 == 1e-4);
  CHECK(defaults.bench.radius == 0.25);

  for (const char* bad : {"[sqp]\nmax_itr = 1\n", "[solver]\neps1 = 1\n",
                          "[sqp]\neps1 = tiny\n", "[formulation]\nname = eq4\n"}) {
    std::istringstream b(bad);
    cli::RunConfig c;
    CHECK_THROWS_AS(cli::apply_config(c, b), cli::ConfigError);
  }
  std::istringstream unknown("[sqp]\nmax_itr = 1\n");
  try {
    cli::apply_config(cfg, unknown);
  } catch (const cli::ConfigError& e) {
    CHECK(e.key() == "sqp.max_itr");
    CHECK(std::string(e.what()).find("sqp.max_itr") != std::string::npos);
  }
}

TEST_CASE("solve command") {
  TempDir dir;
  SUBCASE("benchmark2 eq8 N=5") {
    const std::string cfg = dir.file(
        "b2.ini", "[problem]\nsystem = benchmark2\nsegments = 5\n"
                  "[formulation]\nname = eq8\n");
    const std::string report = dir.file("report.json");
    const std::string trace = dir.file("trace.jsonl");
    const std::string traj = dir.file("traj.txt");
    CHECK(run({"solve", "--config", cfg, "--report", report, "--trace", trace,
               "--dump-trajectory", traj}) == cli::kExitOk);
    std::ifstream f(report);
    const auto j = nlohmann::json::parse(f);
    CHECK(j["termination"] == "S1_converged");
    CHECK(j["status"] == "1");
    CHECK(j["verification"]["passed"] == true);
    std::ifstream t(trace);
    std::string line;
    int lines = 0;
    while (std::getline(t, line)) {
      const auto rec = nlohmann::json::parse(line);
      CHECK(rec.contains("gradL_norm"));
      ++lines;
    }
    CHECK(lines == j["nit"].get<int>());
    CHECK(fs::file_size(traj) > 0);

    // Identical configuration, identical bytes.
    std::string a, b;
    run({"solve", "--config", cfg}, &a);
    run({"solve", "--config", cfg}, &b);
    CHECK(a == b);
  }
  SUBCASE("max_iter = 0") {
    const std::string cfg = dir.file("z.ini", "[sqp]\nmax_iter = 0\n");
    std::string out;
    CHECK(run({"solve", "--config", cfg}, &out) == cli::kExitFailure);
    CHECK(nlohmann::json::parse(out)["termination"] == "S2_maxit");
  }
  SUBCASE("configuration errors") {
    const std::string cfg = dir.file("bad.ini", "[sqp]\nmax_itr = 3\n");
    std::string err;
    CHECK(run({"solve", "--config", cfg}, nullptr, &err) == cli::kExitConfig);
    CHECK(err.find("sqp.max_itr") != std::string::npos);
    CHECK(run({"solve", "--formulation", "eq42"}) == cli::kExitConfig);
    CHECK(run({"solve", "--hessian", "diag"}) == cli::kExitConfig);
    CHECK(run({"solve", "--config", dir.file("missing.ini")}) == cli::kExitConfig);
    CHECK(run({"frobnicate"}) == cli::kExitConfig);
    const std::string odd = dir.file("odd.ini", "[problem]\nsystem = benchmark3\ndims = 3\n");
    CHECK(run({"solve", "--config", odd}) == cli::kExitConfig);
  }
}

TEST_CASE("bench command") {
  TempDir dir;
  const std::string cfg = dir.file(
      "b.ini", "[problem]\nsystem = benchmark2\nsegments = 5, 10\n");
  const std::string csv = dir.file("table.csv");
  CHECK(run({"bench", "--config", cfg, "--csv", csv, "--jobs", "2"}) ==
        cli::kExitOk);
  std::ifstream f(csv);
  std::stringstream body;
  body << f.rdbuf();
  const std::string text = body.str();
  CHECK(text.rfind("n,N,NIT,S\n", 0) == 0);
  CHECK(text.find("3,5,") != std::string::npos);
  CHECK(text.find("3,10,") != std::string::npos);
  CHECK(text.find('\r') == std::string::npos);
}

TEST_CASE("check command") {
  std::string out;
  CHECK(run({"check"}, &out) == cli::kExitOk);
  CHECK(out.find("objective_gradient_fd") != std::string::npos);
  CHECK(out.find("ppcg_vs_direct") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);

  CHECK(run({"check", "--rig-center"}, &out) == cli::kExitFailure);
  std::istringstream lines(out);
  std::string line;
  bool c3_failed = false;
  while (std::getline(lines, line))
    if (line.rfind("rank_C3", 0) == 0) c3_failed = line.find("FAIL") != std::string::npos;
  CHECK(c3_failed);
}
