#include "dynlm/dynamics.hpp"

#include <cmath>
#include <cstring>

#include "dynlm/common.hpp"

namespace dynlm {

namespace {

bool all_finite(const double* x, int n) {
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

void require_finite(const double* x, int n, const char* what) {
  if (!all_finite(x, n)) throw DataError(std::string(what) + ": non-finite input state");
}

}  // namespace

std::string system_kind_name(SystemKind kind) {
  switch (kind) {
    case SystemKind::lorenz: return "lorenz";
    case SystemKind::rossler: return "rossler";
    case SystemKind::henon: return "henon";
  }
  throw DataError("unknown system kind");
}

SystemKind system_kind_from_name(const std::string& name) {
  if (name == "lorenz") return SystemKind::lorenz;
  if (name == "rossler") return SystemKind::rossler;
  if (name == "henon") return SystemKind::henon;
  throw DataError("unknown system name: " + name);
}

SystemSpec SystemSpec::lorenz(double sigma, double rho, double beta) {
  return SystemSpec{SystemKind::lorenz, {sigma, rho, beta}};
}

SystemSpec SystemSpec::rossler(double a, double b, double c) {
  return SystemSpec{SystemKind::rossler, {a, b, c}};
}

SystemSpec SystemSpec::henon(double a, double b) {
  return SystemSpec{SystemKind::henon, {a, b, 0.0}};
}

void vector_field(const SystemSpec& system, const double* x, double* out) {
  if (system.discrete_time())
    throw DataError("vector_field: system is discrete-time, use map_step");
  require_finite(x, system.dim(), "vector_field");
  if (system.kind == SystemKind::lorenz) {
    const double sigma = system.p[0], rho = system.p[1], beta = system.p[2];
    out[0] = sigma * (x[1] - x[0]);
    out[1] = x[0] * (rho - x[2]) - x[1];
    out[2] = x[0] * x[1] - beta * x[2];
  } else {
    const double a = system.p[0], b = system.p[1], c = system.p[2];
    out[0] = -x[1] - x[2];
    out[1] = x[0] + a * x[1];
    out[2] = b + x[2] * (x[0] - c);
  }
}

void map_step(const SystemSpec& system, const double* x, double* out) {
  if (!system.discrete_time())
    throw DataError("map_step: system is continuous-time, use integrate");
  require_finite(x, system.dim(), "map_step");
  const double a = system.p[0], b = system.p[1];
  const double nx = 1.0 - a * (x[0] * x[0]) + x[1];
  out[0] = nx;
  out[1] = b * x[0];
}

void jacobian(const SystemSpec& system, const double* x, double* j) {
  require_finite(x, system.dim(), "jacobian");
  switch (system.kind) {
    case SystemKind::lorenz: {
      const double sigma = system.p[0], rho = system.p[1], beta = system.p[2];
      j[0] = -sigma;   j[1] = sigma;  j[2] = 0.0;
      j[3] = rho - x[2]; j[4] = -1.0; j[5] = -x[0];
      j[6] = x[1];     j[7] = x[0];   j[8] = -beta;
      return;
    }
    case SystemKind::rossler: {
      const double a = system.p[0], c = system.p[2];
      j[0] = 0.0;  j[1] = -1.0; j[2] = -1.0;
      j[3] = 1.0;  j[4] = a;    j[5] = 0.0;
      j[6] = x[2]; j[7] = 0.0;  j[8] = x[0] - c;
      return;
    }
    case SystemKind::henon: {
      const double a = system.p[0], b = system.p[1];
      j[0] = -2.0 * a * x[0]; j[1] = 1.0;
      j[2] = b;               j[3] = 0.0;
      return;
    }
  }
  throw DataError("unknown system kind");
}

namespace {

// False when a stage state overflows: blowups surface as divergence, not as
// an input-validation failure in vector_field.
bool rk4_step(const SystemSpec& system, double h, const double* x, double* out) {
  const int d = system.dim();
  double k1[3], k2[3], k3[3], k4[3], tmp[3];
  vector_field(system, x, k1);
  for (int i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  if (!all_finite(tmp, d)) return false;
  vector_field(system, tmp, k2);
  for (int i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  if (!all_finite(tmp, d)) return false;
  vector_field(system, tmp, k3);
  for (int i = 0; i < d; ++i) tmp[i] = x[i] + h * k3[i];
  if (!all_finite(tmp, d)) return false;
  vector_field(system, tmp, k4);
  for (int i = 0; i < d; ++i)
    out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return all_finite(out, d);
}

}  // namespace

Trajectory integrate(const SystemSpec& system, const double* x0, double tau, long steps,
                     int substeps) {
  if (system.discrete_time())
    throw DataError("integrate: system is discrete-time, use iterate_map");
  if (substeps < 1) throw DataError("integrate: substeps must be >= 1");
  if (!(tau > 0.0)) throw DataError("integrate: tau must be positive");
  require_finite(x0, system.dim(), "integrate");
  const int d = system.dim();
  Trajectory traj;
  traj.dim = d;
  traj.tau = tau;
  traj.states.reserve(std::size_t(steps + 1) * d);
  double x[3];
  std::memcpy(x, x0, sizeof(double) * d);
  traj.states.insert(traj.states.end(), x, x + d);
  const double h = tau / substeps;
  for (long k = 1; k <= steps; ++k) {
    for (int s = 0; s < substeps; ++s) {
      double nx[3];
      if (!rk4_step(system, h, x, nx))
        throw NumericError("integration diverged at step " + std::to_string(k));
      std::memcpy(x, nx, sizeof(double) * d);
    }
    traj.states.insert(traj.states.end(), x, x + d);
  }
  return traj;
}

Trajectory iterate_map(const SystemSpec& system, const double* x0, long steps) {
  if (!system.discrete_time())
    throw DataError("iterate_map: system is continuous-time, use integrate");
  require_finite(x0, system.dim(), "iterate_map");
  const int d = system.dim();
  Trajectory traj;
  traj.dim = d;
  traj.tau = 1.0;
  traj.states.reserve(std::size_t(steps + 1) * d);
  double x[3];
  std::memcpy(x, x0, sizeof(double) * d);
  traj.states.insert(traj.states.end(), x, x + d);
  for (long k = 1; k <= steps; ++k) {
    double nx[3];
    map_step(system, x, nx);
    std::memcpy(x, nx, sizeof(double) * d);
    if (!all_finite(x, d))
      throw NumericError("map iteration diverged at step " + std::to_string(k));
    traj.states.insert(traj.states.end(), x, x + d);
  }
  return traj;
}

void sample_initial(const SystemSpec& preset, Rng& rng, double* out) {
  switch (preset.kind) {
    case SystemKind::lorenz:
      for (int i = 0; i < 3; ++i) out[i] = rng.uniform(-0.1, 0.1);
      return;
    case SystemKind::rossler: {
      const double base[3] = {5.0, 0.0, 0.0};
      for (int i = 0; i < 3; ++i) out[i] = base[i] + rng.uniform(-1.0, 1.0);
      return;
    }
    case SystemKind::henon: {
      const double base[2] = {-0.95, 0.35};
      for (int i = 0; i < 2; ++i) out[i] = base[i] + rng.uniform(-0.05, 0.05);
      return;
    }
  }
  throw DataError("unknown system kind");
}

Dataset generate_dataset(const SystemSpec& preset, int count, long length, double tau,
                         std::uint64_t seed, int substeps, long burn_in,
                         const std::string& split) {
  if (count < 1) throw DataError("generate_dataset: count must be >= 1");
  Dataset ds;
  ds.system = preset;
  ds.split = split;
  ds.seed = seed;
  ds.tau = preset.discrete_time() ? 1.0 : tau;
  ds.trajectories.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, std::uint64_t(i)));
    double x0[3];
    sample_initial(preset, rng, x0);
    try {
      if (preset.discrete_time()) {
        if (burn_in > 0) {
          Trajectory warm = iterate_map(preset, x0, burn_in);
          std::memcpy(x0, warm.state(warm.length() - 1), sizeof(double) * preset.dim());
        }
        ds.trajectories.push_back(iterate_map(preset, x0, length));
      } else {
        if (burn_in > 0) {
          Trajectory warm = integrate(preset, x0, tau, burn_in, substeps);
          std::memcpy(x0, warm.state(warm.length() - 1), sizeof(double) * preset.dim());
        }
        ds.trajectories.push_back(integrate(preset, x0, tau, length, substeps));
      }
    } catch (const NumericError& e) {
      throw NumericError("trajectory " + std::to_string(i) + ": " + e.what());
    }
  }
  return ds;
}

DatasetPreset dataset_preset(SystemKind kind, bool desk_scale) {
  DatasetPreset p;
  switch (kind) {
    case SystemKind::lorenz:
      p.system = SystemSpec::lorenz();
      p.tau = 0.03;
      if (desk_scale) {
        p.train_count = 40; p.test_count = 8; p.steps = 2500;
      } else {
        // duration 1000 at tau 0.03
        p.train_count = 1000; p.test_count = 20; p.steps = 33333;
      }
      return p;
    case SystemKind::rossler:
      p.system = SystemSpec::rossler();
      p.tau = 0.1;
      if (desk_scale) {
        p.train_count = 40; p.test_count = 8; p.steps = 2500;
      } else {
        p.train_count = 1000; p.test_count = 20; p.steps = 10000;
      }
      return p;
    case SystemKind::henon:
      p.system = SystemSpec::henon();
      p.tau = 1.0;
      p.substeps = 1;
      if (desk_scale) {
        p.train_count = 50; p.test_count = 10; p.steps = 2000;
      } else {
        p.train_count = 100; p.test_count = 10; p.steps = 10000;
      }
      return p;
  }
  throw DataError("unknown system kind");
}

}  // namespace dynlm
