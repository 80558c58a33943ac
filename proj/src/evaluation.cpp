#include "dynlm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <string>

#include "dynlm/common.hpp"
#include "dynlm/generation.hpp"
#include "dynlm/linalg.hpp"
#include "dynlm/ot.hpp"
#include "dynlm/rng.hpp"

namespace dynlm {

EmpiricalDistribution empirical_distribution(
    const std::vector<std::vector<TokenId>>& sequences, const Grid& grid) {
  const std::uint64_t vocab = grid.vocab();
  std::map<TokenId, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& seq : sequences) {
    for (const TokenId t : seq) {
      if (t >= vocab) throw DataError("empirical_distribution: token id out of range");
      ++counts[t];
      ++total;
    }
  }
  if (total == 0) throw DataError("empirical_distribution: no states given");

  EmpiricalDistribution dist;
  dist.grid = grid;
  dist.count = total;
  dist.support.reserve(counts.size());
  dist.weights.reserve(counts.size());
  const double inv = 1.0 / static_cast<double>(total);
  for (const auto& [token, count] : counts) {
    dist.support.push_back(token);
    dist.weights.push_back(static_cast<double>(count) * inv);
  }
  return dist;
}

WassersteinReport wasserstein(const EmpiricalDistribution& u,
                              const EmpiricalDistribution& v,
                              const WassersteinOptions& options) {
  if (!(u.grid == v.grid)) throw DataError("wasserstein: distributions use different grids");
  if (u.support.empty() || v.support.empty()) {
    throw DataError("wasserstein: empty distribution");
  }
  const int dim = u.grid.dim;
  std::vector<double> centers_u(u.support.size() * dim);
  std::vector<double> centers_v(v.support.size() * dim);
  for (std::size_t i = 0; i < u.support.size(); ++i) {
    decode_token(u.grid, u.support[i], centers_u.data() + i * dim);
  }
  for (std::size_t j = 0; j < v.support.size(); ++j) {
    decode_token(v.grid, v.support[j], centers_v.data() + j * dim);
  }
  auto ground = [&](int i, int j) {
    const double* a = centers_u.data() + static_cast<std::size_t>(i) * dim;
    const double* b = centers_v.data() + static_cast<std::size_t>(j) * dim;
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  WassersteinReport report;
  report.support_u = u.support.size();
  report.support_v = v.support.size();
  const std::size_t largest = std::max(report.support_u, report.support_v);
  const bool exact = options.method == TransportMethod::exact ||
                     (options.method == TransportMethod::automatic &&
                      largest <= options.exact_support_limit);
  if (exact) {
    const auto result = ot::transport(u.weights, v.weights, ground);
    report.distance = result.cost;
    report.pivots = result.pivots;
    report.exact = true;
  } else {
    report.distance =
        ot::sinkhorn(u.weights, v.weights, ground, options.epsilon,
                     static_cast<int>(options.max_iterations));
    report.exact = false;
  }
  return report;
}

namespace {

// b = j * a for small row-major dim x dim matrices.
void matmul_small(const double* j, const double* a, double* b, int dim) {
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) {
      double s = 0.0;
      for (int t = 0; t < dim; ++t) s += j[r * dim + t] * a[t * dim + c];
      b[r * dim + c] = s;
    }
  }
}

}  // namespace

LyapunovSeries lyapunov_series_states(
    const std::vector<std::vector<double>>& state_sequences, int dim,
    const std::function<void(const double*, double*)>& jacobian, int n_max,
    bool sliding) {
  if (n_max < 3) throw UsageError("lyapunov series needs n_max >= 3");
  if (dim < 1) throw UsageError("lyapunov series needs dim >= 1");

  std::vector<double> sums(n_max + 1, 0.0);
  std::vector<std::uint64_t> counts(n_max + 1, 0);
  std::vector<double> jac(dim * dim), prod(dim * dim), next(dim * dim);

  auto run_window = [&](const std::vector<double>& states, std::size_t start,
                        int limit) {
    // One pass extends the product one Jacobian at a time; every prefix of
    // the window is itself a window starting at the same state.
    double log_acc = 0.0;
    for (int n = 1; n <= limit; ++n) {
      const double* x = states.data() + (start + n - 1) * dim;
      jacobian(x, jac.data());
      if (n == 1) {
        std::copy(jac.begin(), jac.end(), prod.begin());
      } else {
        matmul_small(jac.data(), prod.data(), next.data(), dim);
        prod.swap(next);
      }
      const double norm = linalg::spectral_norm(prod.data(), dim, dim);
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw NumericError("lyapunov series: jacobian product norm is not positive");
      }
      log_acc += std::log(norm);
      sums[n] += log_acc / n;
      ++counts[n];
      const double inv = 1.0 / norm;
      for (double& e : prod) e *= inv;
    }
  };

  for (const auto& states : state_sequences) {
    if (states.size() % dim != 0) throw DataError("lyapunov series: ragged state sequence");
    const std::size_t len = states.size() / dim;
    if (sliding) {
      for (std::size_t start = 0; start < len; ++start) {
        const int limit = static_cast<int>(
            std::min<std::size_t>(n_max, len - start));
        run_window(states, start, limit);
      }
    } else {
      // Disjoint windows: each n gets its own tiling of the sequence.
      for (int n = 1; n <= n_max; ++n) {
        for (std::size_t start = 0; start + n <= len; start += n) {
          double log_acc = 0.0;
          for (int i = 0; i < n; ++i) {
            const double* x = states.data() + (start + i) * dim;
            jacobian(x, jac.data());
            if (i == 0) {
              std::copy(jac.begin(), jac.end(), prod.begin());
            } else {
              matmul_small(jac.data(), prod.data(), next.data(), dim);
              prod.swap(next);
            }
            const double norm = linalg::spectral_norm(prod.data(), dim, dim);
            if (!(norm > 0.0) || !std::isfinite(norm)) {
              throw NumericError("lyapunov series: jacobian product norm is not positive");
            }
            log_acc += std::log(norm);
            const double inv = 1.0 / norm;
            for (double& e : prod) e *= inv;
          }
          sums[n] += log_acc / n;
          ++counts[n];
        }
      }
    }
  }

  LyapunovSeries series;
  for (int n = 1; n <= n_max; ++n) {
    if (counts[n] == 0) break;  // longer windows than any sequence
    series.values.push_back(sums[n] / static_cast<double>(counts[n]));
    series.windows.push_back(counts[n]);
  }
  if (series.values.empty()) throw DataError("lyapunov series: all sequences shorter than 1 state");
  return series;
}

LyapunovSeries lyapunov_series(const std::vector<std::vector<TokenId>>& sequences,
                               const Grid& grid, const SystemSpec& system, int n_max,
                               bool sliding) {
  if (!system.discrete_time()) {
    throw UsageError("lyapunov series supports discrete-time systems only");
  }
  if (grid.dim != system.dim()) {
    throw DataError("lyapunov series: grid dimension does not match the system");
  }
  const int dim = grid.dim;
  std::vector<std::vector<double>> state_sequences;
  state_sequences.reserve(sequences.size());
  for (const auto& seq : sequences) {
    std::vector<double> states(seq.size() * dim);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      decode_token(grid, seq[i], states.data() + i * dim);
    }
    state_sequences.push_back(std::move(states));
  }
  auto jac = [&system](const double* x, double* out) { jacobian(system, x, out); };
  return lyapunov_series_states(state_sequences, dim, jac, n_max, sliding);
}

LyapunovEstimate fit_lyapunov(const LyapunovSeries& series, int fit_lo, int fit_hi) {
  if (fit_lo < 1) throw UsageError("lyapunov fit: fit_lo must be >= 1");
  fit_hi = std::min<int>(fit_hi, static_cast<int>(series.values.size()));
  const int points = fit_hi - fit_lo + 1;
  if (points < 3) throw DataError("lyapunov fit needs at least 3 series points");

  // Normal equations for y ~ lambda + c1/n + c2/n^2.
  double ata[9] = {0};
  double aty[3] = {0};
  for (int n = fit_lo; n <= fit_hi; ++n) {
    const double y = series.values[n - 1];
    const double row[3] = {1.0, 1.0 / n, 1.0 / (static_cast<double>(n) * n)};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ata[r * 3 + c] += row[r] * row[c];
      aty[r] += row[r] * y;
    }
  }

  // Gaussian elimination with partial pivoting on the 3x3 system.
  int perm[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(ata[perm[r] * 3 + col]) > std::abs(ata[perm[pivot] * 3 + col])) pivot = r;
    }
    std::swap(perm[col], perm[pivot]);
    const double diag = ata[perm[col] * 3 + col];
    if (std::abs(diag) < 1e-12) throw DataError("lyapunov fit: rank-deficient design");
    for (int r = col + 1; r < 3; ++r) {
      const double f = ata[perm[r] * 3 + col] / diag;
      for (int c = col; c < 3; ++c) ata[perm[r] * 3 + c] -= f * ata[perm[col] * 3 + c];
      aty[perm[r]] -= f * aty[perm[col]];
    }
  }
  double sol[3];
  for (int col = 2; col >= 0; --col) {
    double s = aty[perm[col]];
    for (int c = col + 1; c < 3; ++c) s -= ata[perm[col] * 3 + c] * sol[c];
    sol[col] = s / ata[perm[col] * 3 + col];
  }

  LyapunovEstimate estimate;
  estimate.series = series;
  estimate.fit_lo = fit_lo;
  estimate.fit_hi = fit_hi;
  estimate.lambda = sol[0];
  estimate.c1 = sol[1];
  estimate.c2 = sol[2];
  return estimate;
}

double divergence_delta_x0(double cell_radius, double lambda, int k, double tau) {
  return cell_radius * std::exp(-lambda * static_cast<double>(k) * tau);
}

namespace {

// Simulates `states` points starting from x0 (inclusive), matching the
// storage convention of integrate/iterate_map.
Trajectory simulate_states(const SystemSpec& system, const double* x0, double tau,
                           std::uint64_t states, int substeps) {
  const long steps = static_cast<long>(states) - 1;
  if (system.discrete_time()) return iterate_map(system, x0, steps);
  return integrate(system, x0, tau, steps, substeps);
}

// Continues a trajectory from its last state by `extra` more states.
void extend_trajectory(const SystemSpec& system, Trajectory& traj, double tau,
                       std::uint64_t extra, int substeps) {
  if (extra == 0) return;
  const Trajectory tail = simulate_states(
      system, traj.state(traj.length() - 1), tau, extra + 1, substeps);
  traj.states.insert(traj.states.end(), tail.states.begin() + traj.dim,
                     tail.states.end());
}

}  // namespace

DivergenceReport divergence_time(const Trajectory& reference,
                                 const std::vector<TokenId>& generated, int k,
                                 double lambda, const Grid& grid,
                                 const SystemSpec& system, std::uint64_t samples,
                                 std::uint64_t horizon, std::uint64_t seed,
                                 int substeps) {
  if (!(lambda > 0.0)) throw UsageError("divergence_time: lambda must be positive");
  if (k < 1) throw UsageError("divergence_time: k must be >= 1");
  if (reference.dim != grid.dim || reference.dim != system.dim()) {
    throw DataError("divergence_time: dimension mismatch between reference, grid, and system");
  }
  if (reference.length() < static_cast<std::size_t>(k)) {
    throw DataError("divergence_time: reference shorter than the conditioning length");
  }
  if (horizon < static_cast<std::uint64_t>(k)) {
    throw UsageError("divergence_time: horizon must be >= k");
  }
  if (generated.size() < static_cast<std::size_t>(k)) {
    throw DataError("divergence_time: generated sequence shorter than the conditioning length");
  }

  const int dim = reference.dim;
  const double tau = reference.tau;
  std::vector<TokenId> ref_prefix(k);
  for (int i = 0; i < k; ++i) ref_prefix[i] = encode_state(grid, reference.state(i));
  for (int i = 0; i < k; ++i) {
    if (generated[i] != ref_prefix[i]) {
      throw DataError("divergence_time: generated sequence was not conditioned on the reference prefix");
    }
  }

  DivergenceReport report;
  report.k = k;
  report.tau = tau;
  report.delta_x0 = divergence_delta_x0(cell_radius(grid), lambda, k, tau);
  report.drawn = samples;

  const std::uint64_t compare_limit =
      std::min<std::uint64_t>(horizon, generated.size());
  Rng rng(derive_seed(seed, 0xd117));
  std::vector<double> x0(dim);
  for (std::uint64_t s = 0; s < samples; ++s) {
    for (int d = 0; d < dim; ++d) {
      x0[d] = reference.state(0)[d] + report.delta_x0 * rng.normal();
    }
    Trajectory sample = simulate_states(system, x0.data(), tau, k, substeps);
    bool accepted = true;
    for (int i = 0; i < k; ++i) {
      if (encode_state(grid, sample.state(i)) != ref_prefix[i]) {
        accepted = false;
        break;
      }
    }
    if (!accepted) continue;

    extend_trajectory(system, sample, tau, horizon - k, substeps);
    std::uint64_t match = compare_limit;  // first mismatch index, if any
    for (std::uint64_t i = k; i < compare_limit; ++i) {
      if (encode_state(grid, sample.state(i)) != generated[i]) {
        match = i;
        break;
      }
    }
    const double match_time = tau * static_cast<double>(match - k);
    report.match_times.push_back(match_time);
    ++report.accepted;
    report.divergence_time = std::max(report.divergence_time, match_time);
  }
  return report;
}

DiffCurve diff_curve(const Dataset& test, const ParameterSet& params,
                     const Grid& grid, int k, int count, std::uint64_t seed,
                     const DiffCurveOptions& options) {
  if (!(options.lambda > 0.0)) throw UsageError("diff_curve: lambda must be positive");
  if (count < 1) throw UsageError("diff_curve: count must be >= 1");
  if (test.trajectories.empty()) throw DataError("diff_curve: empty test set");
  if (count > static_cast<int>(test.trajectories.size())) {
    throw DataError("diff_curve: count exceeds the number of test trajectories");
  }
  const std::size_t len = test.trajectories.front().length();
  for (const auto& traj : test.trajectories) {
    if (traj.length() != len) throw DataError("diff_curve: test trajectories must share one length");
  }
  if (k < 1 || static_cast<std::size_t>(k) >= len) {
    throw UsageError("diff_curve: k must be in [1, trajectory length)");
  }
  const int dim = grid.dim;
  if (dim != test.system.dim()) throw DataError("diff_curve: grid does not match the system");
  const double tau = test.trajectories.front().tau;
  const double delta = divergence_delta_x0(cell_radius(grid), options.lambda, k, tau);

  // Deterministic subset: partial Fisher-Yates over trajectory indices.
  std::vector<std::size_t> order(test.trajectories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick(derive_seed(seed, 0x5e1ec7));
  for (int i = 0; i < count; ++i) {
    const std::size_t j = i + pick.next_u64() % (order.size() - i);
    std::swap(order[i], order[j]);
  }

  DiffCurve curve;
  curve.times.resize(len);
  for (std::size_t t = 0; t < len; ++t) curve.times[t] = tau * static_cast<double>(t);
  std::vector<double> model_sum(len, 0.0), true_sum(len, 0.0);
  std::vector<double> center(dim), x0(dim);

  for (int pi = 0; pi < count; ++pi) {
    const Trajectory& ref = test.trajectories[order[pi]];
    const std::vector<TokenId> ref_tokens = encode_trajectory(grid, ref);
    const std::vector<TokenId> prefix(ref_tokens.begin(), ref_tokens.begin() + k);

    // Paired true trajectory sharing the discretized prefix.
    Rng pair_rng(derive_seed(seed, 0xaa00 + static_cast<std::uint64_t>(pi)));
    Trajectory paired;
    bool found = false;
    for (std::uint64_t draw = 0; draw < options.pair_budget && !found; ++draw) {
      for (int d = 0; d < dim; ++d) x0[d] = ref.state(0)[d] + delta * pair_rng.normal();
      Trajectory candidate = simulate_states(test.system, x0.data(), tau,
                                             static_cast<std::uint64_t>(k), options.substeps);
      bool match = true;
      for (int i = 0; i < k; ++i) {
        if (encode_state(grid, candidate.state(i)) != prefix[static_cast<std::size_t>(i)]) {
          match = false;
          break;
        }
      }
      if (!match) continue;
      extend_trajectory(test.system, candidate, tau, len - k, options.substeps);
      paired = std::move(candidate);
      found = true;
    }
    if (!found) {
      ++curve.skipped;
      continue;
    }

    SamplerConfig sampler;
    sampler.temperature = options.temperature;
    sampler.mask_to_observed = options.observed != nullptr;
    sampler.max_new_tokens = len - k;
    sampler.seed = derive_seed(seed, 0x90de1 + static_cast<std::uint64_t>(pi));
    const std::vector<TokenId> model_tokens =
        sample_continuation(params, prefix, sampler, options.observed);

    for (std::size_t t = 0; t < len; ++t) {
      decode_token(grid, model_tokens[t], center.data());
      double dm = 0.0, dt = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double em = center[d] - ref.state(t)[d];
        const double et = paired.state(t)[d] - ref.state(t)[d];
        dm += em * em;
        dt += et * et;
      }
      model_sum[t] += std::sqrt(dm);
      true_sum[t] += std::sqrt(dt);
    }
    ++curve.used;
  }

  if (curve.skipped * 2 >= static_cast<std::uint64_t>(count)) {
    throw NumericError("diff_curve: " + std::to_string(curve.skipped) + " of " +
                       std::to_string(count) + " references failed to pair");
  }
  curve.model_mean.resize(len);
  curve.true_mean.resize(len);
  const double inv = 1.0 / static_cast<double>(curve.used);
  for (std::size_t t = 0; t < len; ++t) {
    curve.model_mean[t] = model_sum[t] * inv;
    curve.true_mean[t] = true_sum[t] * inv;
  }
  return curve;
}

}  // namespace dynlm
