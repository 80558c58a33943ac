#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dynlm/rng.hpp"

namespace dynlm {

enum class SystemKind { lorenz, rossler, henon };

std::string system_kind_name(SystemKind kind);
SystemKind system_kind_from_name(const std::string& name);

// One of the three benchmark systems with its parameters.
// Lorenz: p = {sigma, rho, beta}; Rossler: p = {a, b, c}; Henon: p = {a, b}.
struct SystemSpec {
  SystemKind kind = SystemKind::lorenz;
  std::array<double, 3> p{};

  bool discrete_time() const { return kind == SystemKind::henon; }
  int dim() const { return kind == SystemKind::henon ? 2 : 3; }

  static SystemSpec lorenz(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);
  static SystemSpec rossler(double a = 0.15, double b = 0.2, double c = 10.0);
  static SystemSpec henon(double a = 1.4, double b = 0.3);
};

// Continuous states sampled every tau time units (tau = 1 for maps),
// stored flat row-major: states[k*dim + j].
struct Trajectory {
  int dim = 0;
  double tau = 1.0;
  std::vector<double> states;

  std::size_t length() const { return dim > 0 ? states.size() / dim : 0; }
  const double* state(std::size_t k) const { return states.data() + k * dim; }
  double* state(std::size_t k) { return states.data() + k * dim; }
};

struct Dataset {
  SystemSpec system;
  std::string split = "train";
  std::uint64_t seed = 0;
  double tau = 1.0;
  std::vector<Trajectory> trajectories;

  std::size_t total_states() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.length();
    return n;
  }
};

// f(x) for continuous-time systems. Throws DataError for maps or
// non-finite input.
void vector_field(const SystemSpec& system, const double* x, double* out);

// One application of a discrete map. Throws DataError for flows.
void map_step(const SystemSpec& system, const double* x, double* out);

// Analytic Jacobian of the map / vector field, row-major dim x dim.
void jacobian(const SystemSpec& system, const double* x, double* j_out);

// Classical RK4 with internal step tau/substeps; stores x(k*tau) for
// k = 0..steps, so the first stored state is x0. Throws NumericError
// naming the step if the state leaves the finite range.
Trajectory integrate(const SystemSpec& system, const double* x0, double tau,
                     long steps, int substeps = 30);

// Map analogue of integrate: x0 plus `steps` applications.
Trajectory iterate_map(const SystemSpec& system, const double* x0, long steps);

// Benchmark initial-condition distributions for the three presets.
void sample_initial(const SystemSpec& preset, Rng& rng, double* out);

// `length` = number of steps per trajectory (stored states = length+1).
// Each trajectory draws an independent initial condition from a seed
// derived as derive_seed(seed, trajectory_index). burn_in steps, when
// nonzero, are advanced and discarded before storage begins.
Dataset generate_dataset(const SystemSpec& preset, int count, long length, double tau,
                         std::uint64_t seed, int substeps = 30, long burn_in = 0,
                         const std::string& split = "train");

// Named data configurations: full-protocol sizes plus reduced desk sizes.
struct DatasetPreset {
  SystemSpec system;
  int train_count = 0;
  int test_count = 0;
  long steps = 0;
  double tau = 1.0;
  int substeps = 30;
};

// kind + desk flag -> counts/steps/tau. Full scale: Lorenz 1000/20 traj,
// tau 0.03, duration 1000 (33,333 steps); Rossler 1000/20, tau 0.1,
// duration 1000; Henon 100/10, 10,000 steps. Desk scale cuts duration
// and trajectory count, never tau.
DatasetPreset dataset_preset(SystemKind kind, bool desk_scale);

}  // namespace dynlm
