#include "falsify/bench.hpp"

#include <atomic>
#include <iomanip>
#include <ostream>
#include <thread>

namespace falsify {

BenchmarkSystem benchmark_system_from_name(const std::string& name) {
  if (name == "benchmark1") return BenchmarkSystem::Benchmark1;
  if (name == "benchmark2") return BenchmarkSystem::Benchmark2;
  if (name == "benchmark3") return BenchmarkSystem::Benchmark3;
  throw std::invalid_argument("unknown system '" + name +
                              "' (expected benchmark1, benchmark2 or benchmark3)");
}

std::string to_string(BenchmarkSystem s) {
  switch (s) {
    case BenchmarkSystem::Benchmark1: return "benchmark1";
    case BenchmarkSystem::Benchmark2: return "benchmark2";
    case BenchmarkSystem::Benchmark3: return "benchmark3";
  }
  return "?";
}

OdeSystem make_system(BenchmarkSystem s, int dim) {
  switch (s) {
    case BenchmarkSystem::Benchmark1: return benchmark1(dim);
    case BenchmarkSystem::Benchmark2: return benchmark2();
    case BenchmarkSystem::Benchmark3: return benchmark3(dim);
  }
  throw std::invalid_argument("unknown benchmark system");
}

void BenchSpec::validate() const {
  if (!(radius > 0.0)) throw std::invalid_argument("BenchSpec: radius <= 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("BenchSpec: horizon <= 0");
  if (!(eps4 >= 0.0)) throw std::invalid_argument("BenchSpec: eps4 < 0");
  if (jobs < 1) throw std::invalid_argument("BenchSpec: jobs < 1");
  for (int N : segment_counts)
    if (N < 1) throw std::invalid_argument("BenchSpec: segment count < 1");
  sqp.validate();
}

ProblemInstance generate_instance(BenchmarkSystem system, int dim,
                                  int n_segments, double horizon,
                                  double radius, const IntegratorConfig& cfg) {
  OdeSystem ode = make_system(system, dim);
  const Vector c_init = Vector::Ones(ode.dim());
  const Vector c_unsafe = flow(ode, c_init, horizon, cfg);
  return ProblemInstance::make(std::move(ode), Ellipsoid::ball(c_init, radius),
                               Ellipsoid::ball(c_unsafe, radius), n_segments);
}

Vector perturbation_vector(int dim, double scale) {
  Vector u(dim);
  for (int i = 0; i < dim; ++i) u[i] = (i % 2 == 0) ? -scale : scale;
  return u;
}

ShootingVector initial_guess(const ProblemInstance& instance, int n_segments,
                             double horizon, double perturbation,
                             const IntegratorConfig& cfg) {
  const int n = instance.dim();
  const double dt = horizon / n_segments;
  const Vector u = perturbation_vector(n, perturbation);
  ShootingVector x(n, n_segments);
  Vector nominal = instance.init.center;
  for (int i = 0; i < n_segments; ++i) {
    if (i > 0) nominal = flow(instance.system, nominal, dt, cfg);
    x.set_start(i, nominal + u);
    x.set_duration(i, dt);
  }
  return x;
}

std::string Verification::failures() const {
  std::string s;
  const auto add = [&s](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  add(negative_length, "negative_length");
  add(integration_error, "integration_error");
  add(init_violation, "init_violation");
  add(unsafe_violation, "unsafe_violation");
  return s;
}

Verification verify(const ProblemInstance& instance, const ShootingVector& x,
                    double eps4, const IntegratorConfig& cfg) {
  Verification v;
  for (int i = 0; i < x.segments(); ++i) {
    if (x.duration(i) < 0.0) v.negative_length = true;
    v.total_time += x.duration(i);
  }
  const Vector x0 = x.start(0);
  v.init_distance = instance.init.norm_distance(x0);
  v.init_violation = !(v.init_distance <= 1.0 + eps4);
  try {
    const Vector end = flow(instance.system, x0, v.total_time, cfg);
    v.unsafe_distance = instance.unsafe_set.norm_distance(end);
    v.unsafe_violation = !(v.unsafe_distance <= 1.0 + eps4);
  } catch (const IntegrationFailure&) {
    v.integration_error = true;
  }
  v.passed = !(v.negative_length || v.integration_error || v.init_violation ||
               v.unsafe_violation);
  return v;
}

std::string bench_status(Termination termination, const Verification& v) {
  if (termination == Termination::IntegrationFailure || !v.passed) return "F";
  return status_digit(termination);
}

BenchRow run_cell(const BenchSpec& spec, int dim, int n_segments) {
  BenchRow row;
  row.N = n_segments;
  try {
    const ProblemInstance instance =
        generate_instance(spec.system, dim, n_segments, spec.horizon,
                          spec.radius, spec.sqp.integrator);
    row.n = instance.dim();
    const ShootingVector guess =
        initial_guess(instance, n_segments, spec.horizon, spec.perturbation,
                      spec.sqp.integrator);
    row.report = run_sqp(spec.formulation, instance, guess, spec.sqp);
    row.nit = row.report.nit;
    row.termination = row.report.termination;
    row.verification =
        verify(instance, row.report.final_x, spec.eps4, spec.sqp.integrator);
  } catch (const IntegrationFailure& e) {
    row.n = spec.system == BenchmarkSystem::Benchmark2 ? 3 : dim;
    row.termination = Termination::IntegrationFailure;
    row.verification.integration_error = true;
    row.report.message = e.what();
  }
  if (row.termination == Termination::IntegrationFailure)
    row.verification.integration_error = true;
  row.status = bench_status(row.termination, row.verification);
  return row;
}

std::vector<BenchRow> run_table(const BenchSpec& spec) {
  spec.validate();
  std::vector<std::pair<int, int>> cells;
  for (int n : spec.dims)
    for (int N : spec.segment_counts) cells.emplace_back(n, N);

  std::vector<BenchRow> rows(cells.size());
  std::atomic<size_t> next{0};
  const auto worker = [&] {
    for (size_t k = next++; k < cells.size(); k = next++)
      rows[k] = run_cell(spec, cells[k].first, cells[k].second);
  };
  const int threads =
      std::min<int>(spec.jobs, static_cast<int>(std::max<size_t>(cells.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

void emit_csv(const std::vector<BenchRow>& rows, std::ostream& sink) {
  sink << "n,N,NIT,S\n";
  for (const auto& r : rows)
    sink << r.n << ',' << r.N << ',' << r.nit << ',' << r.status << '\n';
}

void write_trajectory(std::ostream& out, const ProblemInstance& instance,
                      const ShootingVector& x, int samples_per_segment,
                      const IntegratorConfig& cfg) {
  out << std::setprecision(17);
  double t_offset = 0.0;
  for (int i = 0; i < x.segments(); ++i) {
    out << "# segment " << (i + 1) << '\n';
    const double dt = x.duration(i) / samples_per_segment;
    Vector state = x.start(i);
    for (int k = 0; k <= samples_per_segment; ++k) {
      if (k > 0) state = flow(instance.system, state, dt, cfg);
      out << t_offset + k * dt;
      for (Eigen::Index j = 0; j < state.size(); ++j) out << ' ' << state[j];
      out << '\n';
    }
    t_offset += x.duration(i);
  }
}

}  // namespace falsify
