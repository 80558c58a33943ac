#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dynlm/common.hpp"
#include "dynlm/discretization.hpp"
#include "dynlm/dynamics.hpp"
#include "dynlm/evaluation.hpp"
#include "dynlm/rng.hpp"
#include "dynlm/transformer.hpp"

using namespace dynlm;

namespace {

Grid line_grid(int n, double lo, double hi) {
  Grid g;
  g.dim = 1;
  g.n = n;
  g.lo = {lo};
  g.hi = {hi};
  return g;
}

// Spectral norm of a 2x2 matrix in closed form, independent of the library.
double norm2x2(const double m[4]) {
  const double a = m[0] * m[0] + m[2] * m[2];
  const double b = m[0] * m[1] + m[2] * m[3];
  const double d = m[1] * m[1] + m[3] * m[3];
  const double mean = 0.5 * (a + d);
  const double disc = std::sqrt(std::max(0.0, mean * mean - (a * d - b * b)));
  return std::sqrt(mean + disc);
}

void matmul2x2(const double a[4], const double b[4], double out[4]) {
  out[0] = a[0] * b[0] + a[1] * b[2];
  out[1] = a[0] * b[1] + a[1] * b[3];
  out[2] = a[2] * b[0] + a[3] * b[2];
  out[3] = a[2] * b[1] + a[3] * b[3];
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("empirical distribution counts visits") {
  const Grid g = line_grid(4, 0.0, 4.0);
  const auto d = empirical_distribution({{0, 0, 1, 3}}, g);
  CHECK(d.support == std::vector<TokenId>{0, 1, 3});
  REQUIRE(d.weights.size() == 3);
  CHECK(d.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.weights[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d.weights[2] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d.count == 4);
  CHECK(d.grid == g);
}

TEST_CASE("splitting a stream across sequences changes nothing") {
  const Grid g = line_grid(4, 0.0, 4.0);
  const auto joint = empirical_distribution({{0, 1, 1, 2, 3, 3, 3, 0}}, g);
  const auto split = empirical_distribution({{0, 1, 1}, {2, 3, 3}, {3, 0}}, g);
  CHECK(joint.support == split.support);
  CHECK(joint.weights == split.weights);
  CHECK(joint.count == split.count);
}

TEST_CASE("empirical distribution validates its input") {
  const Grid g = line_grid(4, 0.0, 4.0);
  CHECK_THROWS_AS(empirical_distribution({}, g), DataError);
  CHECK_THROWS_AS(empirical_distribution({{}}, g), DataError);
  CHECK_THROWS_AS(empirical_distribution({{4}}, g), DataError);
}

TEST_CASE("wasserstein requires a shared grid") {
  const auto u = empirical_distribution({{0}}, line_grid(2, 0.0, 2.0));
  const auto v = empirical_distribution({{0}}, line_grid(3, 0.0, 2.0));
  CHECK_THROWS_AS(wasserstein(u, v), DataError);
}

TEST_CASE("self-distance is exactly zero") {
  const Grid g = line_grid(4, 0.0, 4.0);
  const auto u = empirical_distribution({{0, 1, 1, 3, 2}}, g);
  const auto r = wasserstein(u, u);
  CHECK(r.distance == 0.0);
  CHECK(r.exact);
}

TEST_CASE("neighboring point masses sit one cell width apart") {
  const Grid g = line_grid(2, 0.0, 2.0);
  const auto u = empirical_distribution({{0}}, g);
  const auto v = empirical_distribution({{1}}, g);
  const auto r = wasserstein(u, v);
  CHECK(r.distance == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.exact);
  CHECK(r.support_u == 1);
  CHECK(r.support_v == 1);
}

TEST_CASE("a one-dimensional instance matches the hand-computed CDF integral") {
  const Grid g = line_grid(4, 0.0, 4.0);
  const auto u = empirical_distribution({{0, 0, 1}}, g);
  const auto v = empirical_distribution({{2, 3, 3}}, g);
  const auto r = wasserstein(u, v);
  CHECK(r.distance == doctest::Approx(7.0 / 3.0).epsilon(1e-13));
  CHECK(r.exact);

  WassersteinOptions entropic;
  entropic.method = TransportMethod::entropic;
  entropic.epsilon = 1e-3;
  const auto e = wasserstein(u, v, entropic);
  CHECK_FALSE(e.exact);
  CHECK(std::abs(e.distance - 7.0 / 3.0) <= 0.05);
}

TEST_CASE("a constant-Jacobian functor reproduces the closed-form series") {
  // J = [[0, 1], [0.3, 0]]: J^2 = 0.3 I, so ||J^n|| is 0.3^(n/2) for even n
  // and 0.3^m * ||J|| = 0.3^m for n = 2m+1 (||J|| = 1).
  const auto jac = [](const double*, double* out) {
    out[0] = 0.0;
    out[1] = 1.0;
    out[2] = 0.3;
    out[3] = 0.0;
  };
  const int length = 40;
  std::vector<std::vector<double>> seqs = {std::vector<double>(2 * length, 0.0)};
  const auto series = lyapunov_series_states(seqs, 2, jac, 8, true);
  REQUIRE(series.values.size() == 8);
  for (int n = 1; n <= 8; ++n) {
    const int m = n / 2;
    const double want = n % 2 == 0 ? std::log(0.3) / 2.0
                                   : m * std::log(0.3) / n;
    CHECK(series.values[n - 1] == doctest::Approx(want).epsilon(1e-12));
    CHECK(series.windows[n - 1] == std::uint64_t(length - n + 1));
  }
}

TEST_CASE("running normalization agrees with the direct matrix product") {
  const SystemSpec henon = SystemSpec::henon();
  double x0[2] = {0.1, 0.1};
  const Trajectory traj = iterate_map(henon, x0, 39);
  std::vector<std::vector<double>> seqs = {traj.states};
  const auto jac = [&](const double* x, double* out) { jacobian(henon, x, out); };
  const int n_max = 10;
  const auto series = lyapunov_series_states(seqs, 2, jac, n_max, true);

  const std::size_t len = traj.length();
  for (int n = 1; n <= n_max; ++n) {
    double sum = 0.0;
    std::uint64_t windows = 0;
    for (std::size_t m = 0; m + n <= len; ++m) {
      double prod[4] = {1.0, 0.0, 0.0, 1.0};
      for (int s = 0; s < n; ++s) {
        const double* x = traj.state(m + s);
        // Henon Jacobian written out by hand: d(1 - a x^2 + y, b x)/d(x, y).
        const double j[4] = {-2.0 * 1.4 * x[0], 1.0, 0.3, 0.0};
        double next[4];
        matmul2x2(j, prod, next);
        std::copy(next, next + 4, prod);
      }
      sum += std::log(norm2x2(prod)) / n;
      ++windows;
    }
    CHECK(series.windows[n - 1] == windows);
    CHECK(std::abs(series.values[n - 1] - sum / double(windows)) <= 1e-9);
  }
}

TEST_CASE("disjoint windows tile the sequence") {
  const auto jac = [](const double*, double* out) {
    out[0] = 2.0;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 0.5;
  };
  std::vector<std::vector<double>> seqs = {std::vector<double>(2 * 40, 0.0)};
  const auto series = lyapunov_series_states(seqs, 2, jac, 7, false);
  for (int n = 1; n <= 7; ++n) {
    CHECK(series.windows[n - 1] == std::uint64_t(40 / n));
    CHECK(series.values[n - 1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("the token front end rejects continuous-time systems") {
  const Grid g = line_grid(4, 0.0, 4.0);
  CHECK_THROWS_AS(lyapunov_series({{0, 1, 2}}, g, SystemSpec::lorenz(), 5), UsageError);
}

TEST_CASE("tokenized Henon data lands near the known exponent") {
  const SystemSpec henon = SystemSpec::henon();
  Rng rng(17);
  double x0[2];
  sample_initial(henon, rng, x0);
  Trajectory traj = iterate_map(henon, x0, 3000);
  Dataset data;
  data.system = henon;
  data.tau = 1.0;
  data.trajectories = {traj};
  const Grid g = fit_grid(data, 50);
  const auto tokens = encode_trajectory(g, traj);
  const auto series = lyapunov_series({tokens}, g, henon, 15);
  const auto fit = fit_lyapunov(series, 1, 15);
  CHECK(fit.lambda > 0.3);
  CHECK(fit.lambda < 0.5);
}

TEST_CASE("the extrapolation fit recovers planted coefficients") {
  LyapunovSeries series;
  for (int n = 1; n <= 15; ++n) {
    series.values.push_back(0.4192 + 0.3 / n - 0.12 / (double(n) * n));
    series.windows.push_back(100);
  }
  const auto fit = fit_lyapunov(series, 1, 15);
  CHECK(std::abs(fit.lambda - 0.4192) <= 1e-10);
  CHECK(std::abs(fit.c1 - 0.3) <= 1e-9);
  CHECK(std::abs(fit.c2 + 0.12) <= 1e-9);
  CHECK(fit.fit_lo == 1);
  CHECK(fit.fit_hi == 15);
}

TEST_CASE("fitting a constant series returns the constant") {
  LyapunovSeries series;
  for (int n = 1; n <= 6; ++n) {
    series.values.push_back(0.75);
    series.windows.push_back(10);
  }
  const auto fit = fit_lyapunov(series, 1, 15);
  CHECK(fit.fit_hi == 6);  // clipped to the available series
  CHECK(std::abs(fit.lambda - 0.75) <= 1e-10);
  CHECK(std::abs(fit.c1) <= 1e-9);
  CHECK(std::abs(fit.c2) <= 1e-9);
}

TEST_CASE("the fit needs at least three points") {
  LyapunovSeries series;
  series.values = {0.1, 0.2};
  series.windows = {5, 5};
  CHECK_THROWS_AS(fit_lyapunov(series, 1, 15), DataError);
}

TEST_CASE("the conditioning-matched perturbation scale") {
  CHECK(std::abs(divergence_delta_x0(0.35355, 0.9056, 100, 0.03) - 0.02336) <= 1e-5);
  CHECK(divergence_delta_x0(1.0, 0.0, 10, 0.5) == 1.0);
}

TEST_CASE("divergence time is exact when the generation is the truth") {
  const SystemSpec henon = SystemSpec::henon();
  Rng rng(23);
  double x0[2];
  sample_initial(henon, rng, x0);
  const Trajectory reference = iterate_map(henon, x0, 80);
  Dataset data;
  data.system = henon;
  data.tau = 1.0;
  data.trajectories = {reference};
  const Grid g = fit_grid(data, 20);
  const auto tokens = encode_trajectory(g, reference);

  // lambda = 5000 underflows delta_x0 to zero, so every accepted draw is the
  // reference itself and token agreement runs to the horizon exactly.
  const int k = 10;
  const std::uint64_t horizon = 60;
  const auto report = divergence_time(reference, tokens, k, 5000.0, g, henon,
                                      /*samples=*/8, horizon, /*seed=*/5);
  CHECK(report.delta_x0 == 0.0);
  CHECK(report.accepted == report.drawn);
  CHECK(report.accepted == 8);
  CHECK(report.divergence_time == double(horizon - k));
  for (double t : report.match_times) CHECK(t == double(horizon - k));
}

TEST_CASE("a generation that breaks immediately after the prefix scores zero") {
  const SystemSpec henon = SystemSpec::henon();
  Rng rng(29);
  double x0[2];
  sample_initial(henon, rng, x0);
  const Trajectory reference = iterate_map(henon, x0, 80);
  Dataset data;
  data.system = henon;
  data.tau = 1.0;
  data.trajectories = {reference};
  const Grid g = fit_grid(data, 20);
  auto tokens = encode_trajectory(g, reference);
  const int k = 10;
  tokens[k] = tokens[k] == 0 ? 1 : 0;
  const auto report =
      divergence_time(reference, tokens, k, 5000.0, g, henon, 4, 60, 7);
  CHECK(report.accepted == 4);
  CHECK(report.divergence_time == 0.0);
}

TEST_CASE("a wide perturbation on a fine grid accepts nothing") {
  const SystemSpec henon = SystemSpec::henon();
  Rng rng(31);
  double x0[2];
  sample_initial(henon, rng, x0);
  const Trajectory reference = iterate_map(henon, x0, 80);
  Dataset data;
  data.system = henon;
  data.tau = 1.0;
  data.trajectories = {reference};
  const Grid g = fit_grid(data, 200);
  const auto tokens = encode_trajectory(g, reference);
  const auto report =
      divergence_time(reference, tokens, 30, 1e-12, g, henon, 50, 60, 11);
  CHECK(report.drawn == 50);
  CHECK(report.accepted == 0);
  CHECK(report.divergence_time == 0.0);
  CHECK(report.match_times.empty());
}

TEST_CASE("divergence-time input validation") {
  const SystemSpec henon = SystemSpec::henon();
  double x0[2] = {0.1, 0.1};
  const Trajectory reference = iterate_map(henon, x0, 40);
  Dataset data;
  data.system = henon;
  data.tau = 1.0;
  data.trajectories = {reference};
  const Grid g = fit_grid(data, 10);
  const auto tokens = encode_trajectory(g, reference);
  CHECK_THROWS_AS(divergence_time(reference, tokens, 5, 0.0, g, henon, 2, 30, 1),
                  UsageError);
  CHECK_THROWS_AS(divergence_time(reference, tokens, 0, 1.0, g, henon, 2, 30, 1),
                  UsageError);
  CHECK_THROWS_AS(divergence_time(reference, tokens, 5, 1.0, g, henon, 2, 4, 1),
                  UsageError);
  auto broken = tokens;
  broken[2] = broken[2] == 0 ? 1 : 0;
  CHECK_THROWS_AS(divergence_time(reference, broken, 5, 1.0, g, henon, 2, 30, 1),
                  DataError);
  const std::vector<TokenId> short_gen(tokens.begin(), tokens.begin() + 3);
  CHECK_THROWS_AS(divergence_time(reference, short_gen, 5, 1.0, g, henon, 2, 30, 1),
                  DataError);
}

TEST_CASE("difference curves pair exactly under a huge exponent") {
  const SystemSpec henon = SystemSpec::henon();
  Dataset test = generate_dataset(henon, 3, 60, 1.0, 99);
  const Grid g = fit_grid(test, 5);
  ModelConfig mc;
  mc.vocab = static_cast<std::uint32_t>(g.vocab());
  mc.context = 16;
  mc.dim = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.dropout = 0.0;
  const ParameterSet params = init_model(mc, 3);

  DiffCurveOptions options;
  options.lambda = 1000.0;  // pairing delta underflows to zero
  options.temperature = 1.0;
  options.pair_budget = 4;
  const int k = 8;
  const auto curve = diff_curve(test, params, g, k, 2, 42, options);
  CHECK(curve.used == 2);
  CHECK(curve.skipped == 0);
  REQUIRE(curve.times.size() == 61);
  REQUIRE(curve.model_mean.size() == 61);
  REQUIRE(curve.true_mean.size() == 61);
  for (std::size_t t = 0; t < curve.times.size(); ++t) {
    CHECK(curve.times[t] == double(t));
    CHECK(curve.true_mean[t] == 0.0);
  }
  const double radius = cell_radius(g);
  for (int t = 0; t < k; ++t) CHECK(curve.model_mean[t] <= radius + 1e-12);
}

TEST_CASE("an exhausted pairing budget is an error") {
  const SystemSpec henon = SystemSpec::henon();
  Dataset test = generate_dataset(henon, 3, 60, 1.0, 99);
  const Grid g = fit_grid(test, 40);
  ModelConfig mc;
  mc.vocab = static_cast<std::uint32_t>(g.vocab());
  mc.context = 16;
  mc.dim = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.dropout = 0.0;
  const ParameterSet params = init_model(mc, 3);
  DiffCurveOptions options;
  options.lambda = 1e-12;
  options.pair_budget = 1;
  CHECK_THROWS_AS(diff_curve(test, params, g, 12, 2, 42, options), NumericError);
}

TEST_CASE("difference-curve validation") {
  const SystemSpec henon = SystemSpec::henon();
  Dataset test = generate_dataset(henon, 2, 30, 1.0, 5);
  const Grid g = fit_grid(test, 5);
  ModelConfig mc;
  mc.vocab = static_cast<std::uint32_t>(g.vocab());
  mc.context = 16;
  mc.dim = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.dropout = 0.0;
  const ParameterSet params = init_model(mc, 3);
  DiffCurveOptions options;
  options.lambda = 100.0;
  CHECK_THROWS_AS(diff_curve(test, params, g, 5, 0, 1, options), UsageError);
  CHECK_THROWS_AS(diff_curve(test, params, g, 5, 5, 1, options), DataError);
  CHECK_THROWS_AS(diff_curve(test, params, g, 0, 1, 1, options), UsageError);
  DiffCurveOptions bad = options;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(diff_curve(test, params, g, 5, 1, 1, bad), UsageError);
}

}  // TEST_SUITE
