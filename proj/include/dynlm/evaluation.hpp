#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dynlm/discretization.hpp"
#include "dynlm/dynamics.hpp"
#include "dynlm/transformer.hpp"

namespace dynlm {

// Visit frequencies over grid cells. Support is sorted ascending and holds
// only occupied cells; weights are strictly positive and sum to 1.
struct EmpiricalDistribution {
  Grid grid;
  std::vector<TokenId> support;
  std::vector<double> weights;
  std::uint64_t count = 0;
};

EmpiricalDistribution empirical_distribution(
    const std::vector<std::vector<TokenId>>& sequences, const Grid& grid);

enum class TransportMethod { automatic, exact, entropic };

struct WassersteinOptions {
  TransportMethod method = TransportMethod::automatic;
  // automatic switches to the entropic approximation above this support size.
  std::size_t exact_support_limit = 20000;
  double epsilon = 1e-3;
  std::uint64_t max_iterations = 10000;
};

struct WassersteinReport {
  double distance = 0.0;
  bool exact = true;
  std::size_t support_u = 0;
  std::size_t support_v = 0;
  std::uint64_t pivots = 0;
};

// Exact 1-Wasserstein between two distributions on the same grid, with
// Euclidean distance between cell centers as ground cost. Grids must
// compare equal. The entropic path is an approximation and is only taken
// when asked for (or when automatic routing hits giant supports).
WassersteinReport wasserstein(const EmpiricalDistribution& u,
                              const EmpiricalDistribution& v,
                              const WassersteinOptions& options = {});

struct LyapunovSeries {
  std::vector<double> values;          // lambda_n, n = 1..values.size()
  std::vector<std::uint64_t> windows;  // windows averaged per n
};

// lambda_n averaged over all length-n windows of the decoded sequences:
// (1/n) ln ||J(x_{m+n-1})...J(x_m)||_2 with running normalization of the
// product. jacobian fills a row-major dim x dim matrix at a given state.
LyapunovSeries lyapunov_series_states(
    const std::vector<std::vector<double>>& state_sequences, int dim,
    const std::function<void(const double*, double*)>& jacobian, int n_max,
    bool sliding = true);

// Token-sequence front end: decodes cell centers and uses the system's
// analytic Jacobian. Discrete-time systems only.
LyapunovSeries lyapunov_series(const std::vector<std::vector<TokenId>>& sequences,
                               const Grid& grid, const SystemSpec& system, int n_max,
                               bool sliding = true);

struct LyapunovEstimate {
  LyapunovSeries series;
  int fit_lo = 1;
  int fit_hi = 15;
  double lambda = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

// Least-squares fit of lambda + c1/n + c2/n^2 over n in [fit_lo, fit_hi]
// (clipped to the available series). Needs at least 3 points.
LyapunovEstimate fit_lyapunov(const LyapunovSeries& series, int fit_lo = 1,
                              int fit_hi = 15);

// Initial perturbation scale matched to the conditioning length:
// l_d * exp(-lambda * k * tau).
double divergence_delta_x0(double cell_radius, double lambda, int k, double tau);

struct DivergenceReport {
  int k = 0;
  double tau = 0.0;
  double delta_x0 = 0.0;
  std::uint64_t drawn = 0;
  std::uint64_t accepted = 0;
  std::vector<double> match_times;     // per accepted sample
  double divergence_time = 0.0;        // max of match_times; 0 if none accepted
};

// Draws `samples` initial conditions from Normal(reference.x0, delta_x0^2 I),
// keeps those whose first k encoded tokens match the reference, and measures
// how long each accepted true continuation agrees with `generated` in token
// space. `generated` must begin with the reference's first k tokens.
DivergenceReport divergence_time(const Trajectory& reference,
                                 const std::vector<TokenId>& generated, int k,
                                 double lambda, const Grid& grid,
                                 const SystemSpec& system, std::uint64_t samples,
                                 std::uint64_t horizon, std::uint64_t seed,
                                 int substeps = 30);

struct DiffCurve {
  std::vector<double> times;
  std::vector<double> model_mean;  // mean |model(t) - reference(t)|
  std::vector<double> true_mean;   // mean |paired_true(t) - reference(t)|
  std::uint64_t used = 0;
  std::uint64_t skipped = 0;
};

struct DiffCurveOptions {
  double lambda = 0.0;             // exponent used for the pairing delta_x0
  double temperature = 1.0;
  std::uint64_t pair_budget = 1000;  // rejection-sampling draws per reference
  int substeps = 30;
  // Mask generations to this observed set; null disables masking.
  const std::vector<std::uint8_t>* observed = nullptr;
};

// For `count` randomly chosen test trajectories: condition the model on the
// first k tokens, rejection-sample a paired true trajectory sharing those
// tokens, and average both Euclidean distances to the reference over time.
// References that fail to pair are skipped; more than half skipped is an
// error.
DiffCurve diff_curve(const Dataset& test, const ParameterSet& params,
                     const Grid& grid, int k, int count, std::uint64_t seed,
                     const DiffCurveOptions& options);

}  // namespace dynlm
