#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "falsify/formulation.hpp"
#include "falsify/sqp.hpp"

namespace falsify {

enum class BenchmarkSystem { Benchmark1, Benchmark2, Benchmark3 };

BenchmarkSystem benchmark_system_from_name(const std::string& name);
std::string to_string(BenchmarkSystem s);
/// The benchmark ODE; `dim` is ignored for benchmark2, which is always 3-D.
OdeSystem make_system(BenchmarkSystem s, int dim);

struct BenchSpec {
  BenchmarkSystem system = BenchmarkSystem::Benchmark2;
  std::vector<int> dims{3};
  std::vector<int> segment_counts{5, 10, 15, 20, 25, 30};
  Formulation formulation = Formulation::by_equation(8);
  double horizon = 5.0;         // T
  double radius = 0.25;         // Init and Unsafe are balls of this radius
  double eps4 = 1e-4;           // verification slack
  double perturbation = 0.5;    // scale of u; 0 gives exact splits
  SqpConfig sqp;
  int jobs = 1;

  void validate() const;
};

/// Init = ball(c_I, r), Unsafe = ball(Phi(T, c_I), r) with c_I = [1, ..., 1].
ProblemInstance generate_instance(BenchmarkSystem system, int dim,
                                  int n_segments, double horizon = 5.0,
                                  double radius = 0.25,
                                  const IntegratorConfig& cfg = {});

/// u = scale * [-1, 1, -1, ...] (entry i is scale * (-1)^i, i = 1..n).
Vector perturbation_vector(int dim, double scale);

/// Splits the nominal trajectory from c_I into N equal segments of length
/// T / N and shifts every start state (including the first) by u.
ShootingVector initial_guess(const ProblemInstance& instance, int n_segments,
                             double horizon = 5.0, double perturbation = 0.5,
                             const IntegratorConfig& cfg = {});

struct Verification {
  bool passed = false;
  bool negative_length = false;
  bool init_violation = false;
  bool unsafe_violation = false;
  bool integration_error = false;
  double init_distance = 0.0;    // ||x0^1 - c_I||_{E_I}
  double unsafe_distance = 0.0;  // ||Phi(sum t_i, x0^1) - c_U||_{E_U}
  double total_time = 0.0;

  /// Names of the failure predicates that fired, comma separated.
  std::string failures() const;
};

/// Re-simulates one trajectory from x0^1 for sum(t_i) and checks both
/// ellipsoid bounds with slack 1 + eps4; any negative t_i fails.
Verification verify(const ProblemInstance& instance, const ShootingVector& x,
                    double eps4 = 1e-4, const IntegratorConfig& cfg = {});

struct BenchRow {
  int n = 0;
  int N = 0;
  int nit = 0;
  std::string status;  // "1", "2", "3" or "F"
  Termination termination = Termination::S2MaxIter;
  Verification verification;
  RunReport report;
};

/// Status for a run: the termination digit, overridden by "F" on an
/// integration error, a negative segment length or a failed verification.
std::string bench_status(Termination termination, const Verification& v);

/// One complete cell: instance, initial guess, SQP and verification.
BenchRow run_cell(const BenchSpec& spec, int dim, int n_segments);

/// Every (n, N) cell in (dims x segment_counts) order. Cells may run
/// concurrently (spec.jobs); the result order does not depend on it.
std::vector<BenchRow> run_table(const BenchSpec& spec);

/// Header "n,N,NIT,S" then one LF-terminated row per cell.
void emit_csv(const std::vector<BenchRow>& rows, std::ostream& sink);

/// Plot-ready samples "t x1 ... xn" along each segment, segments separated
/// by "# segment i" comment lines; t is the cumulative time.
void write_trajectory(std::ostream& out, const ProblemInstance& instance,
                      const ShootingVector& x, int samples_per_segment = 50,
                      const IntegratorConfig& cfg = {});

}  // namespace falsify
