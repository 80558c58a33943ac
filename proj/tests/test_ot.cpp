#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dynlm/common.hpp"
#include "dynlm/ot.hpp"
#include "dynlm/rng.hpp"
#include "support/lp_oracle.hpp"

using namespace dynlm;

namespace {

struct Instance {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<std::vector<double>> c;
};

Instance random_instance(Rng& rng, bool euclidean) {
  Instance inst;
  const int m = 1 + static_cast<int>(rng.uniform() * 8.0);
  const int k = 1 + static_cast<int>(rng.uniform() * 8.0);
  auto masses = [&](int count) {
    std::vector<double> w(count);
    double total = 0.0;
    for (double& x : w) {
      x = rng.uniform() + 0.05;
      total += x;
    }
    for (double& x : w) x /= total;
    return w;
  };
  inst.a = masses(m);
  inst.b = masses(k);
  inst.c.assign(m, std::vector<double>(k, 0.0));
  if (euclidean) {
    std::vector<std::pair<double, double>> pa(m), pb(k);
    for (auto& p : pa) p = {rng.uniform(), rng.uniform()};
    for (auto& p : pb) p = {rng.uniform(), rng.uniform()};
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < k; ++j) {
        inst.c[i][j] = std::hypot(pa[i].first - pb[j].first, pa[i].second - pb[j].second);
      }
    }
  } else {
    for (auto& row : inst.c) {
      for (double& x : row) x = rng.uniform() * 3.0;
    }
  }
  return inst;
}

double solve(const Instance& inst) {
  return ot::transport(inst.a, inst.b, [&](int i, int j) { return inst.c[i][j]; }).cost;
}

// 1-Wasserstein on the line via the CDF integral: W1 = integral |F_a - F_b|.
double w1_line(const std::vector<double>& xs, const std::vector<double>& wa,
               const std::vector<double>& ys, const std::vector<double>& wb) {
  struct Event {
    double x;
    double da;
    double db;
  };
  std::vector<Event> events;
  events.reserve(xs.size() + ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) events.push_back({xs[i], wa[i], 0.0});
  for (std::size_t j = 0; j < ys.size(); ++j) events.push_back({ys[j], 0.0, wb[j]});
  std::sort(events.begin(), events.end(),
            [](const Event& l, const Event& r) { return l.x < r.x; });
  double fa = 0.0, fb = 0.0, total = 0.0, prev = events.front().x;
  for (const Event& e : events) {
    total += std::abs(fa - fb) * (e.x - prev);
    prev = e.x;
    fa += e.da;
    fb += e.db;
  }
  return total;
}

}  // namespace

TEST_SUITE("ot") {

TEST_CASE("half the mass moving at unit cost pays one half") {
  const auto r = ot::transport({0.5, 0.5}, {1.0},
                               [](int i, int) { return i == 0 ? 0.0 : 1.0; });
  CHECK(r.cost == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("two point masses pay their pairwise cost") {
  const auto r = ot::transport({1.0}, {1.0}, [](int, int) { return 2.0; });
  CHECK(r.cost == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("identical distributions transport for free") {
  const std::vector<double> w = {0.2, 0.3, 0.5};
  const auto r = ot::transport(w, w, [](int i, int j) { return i == j ? 0.0 : 1.0; });
  CHECK(r.cost == 0.0);
}

TEST_CASE("constant costs make every plan equally expensive") {
  const auto r = ot::transport({0.25, 0.75}, {0.5, 0.5}, [](int, int) { return 1.75; });
  CHECK(r.cost == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("random instances match an independent simplex oracle") {
  Rng rng(90210);
  for (int trial = 0; trial < 60; ++trial) {
    const Instance inst = random_instance(rng, trial % 2 == 0);
    const double got = solve(inst);
    const double want = lp_oracle::transport_cost(inst.a, inst.b, inst.c);
    CHECK(std::abs(got - want) <= 1e-9);
  }
}

TEST_CASE("transport is symmetric under swapping sides") {
  Rng rng(4242);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance inst = random_instance(rng, trial % 2 == 0);
    const double fwd = solve(inst);
    const double rev =
        ot::transport(inst.b, inst.a, [&](int i, int j) { return inst.c[j][i]; }).cost;
    CHECK(std::abs(fwd - rev) <= 1e-12);
  }
}

TEST_CASE("a large line instance matches the closed-form CDF integral") {
  Rng rng(777);
  const int m = 300, k = 400;
  std::vector<double> xs(m), ys(k), wa(m), wb(k);
  for (double& x : xs) x = rng.uniform() * 10.0;
  for (double& y : ys) y = rng.uniform() * 10.0;
  double ta = 0.0, tb = 0.0;
  for (double& w : wa) {
    w = rng.uniform() + 0.01;
    ta += w;
  }
  for (double& w : wb) {
    w = rng.uniform() + 0.01;
    tb += w;
  }
  for (double& w : wa) w /= ta;
  for (double& w : wb) w /= tb;
  const auto r =
      ot::transport(wa, wb, [&](int i, int j) { return std::abs(xs[i] - ys[j]); });
  CHECK(std::abs(r.cost - w1_line(xs, wa, ys, wb)) <= 1e-9);
}

TEST_CASE("input validation") {
  const auto unit = [](int, int) { return 1.0; };
  CHECK_THROWS_AS(ot::transport({1.0}, {0.5}, unit), DataError);
  CHECK_THROWS_AS(ot::transport({-0.5, 1.5}, {1.0}, unit), DataError);
  CHECK_THROWS_AS(ot::transport({1.0}, {1.0}, [](int, int) { return -1.0; }), DataError);
  CHECK_THROWS_AS(ot::transport({1.0}, {0.0}, unit), DataError);
}

TEST_CASE("all-zero mass on both sides is an empty problem") {
  const auto r = ot::transport({0.0, 0.0}, {0.0}, [](int, int) { return 1.0; });
  CHECK(r.cost == 0.0);
  CHECK(r.pivots == 0);
}

TEST_CASE("zero-mass entries are dropped but keep original cost indices") {
  const std::vector<double> a = {0.4, 0.6};
  const std::vector<double> b = {0.7, 0.3};
  const std::vector<std::vector<double>> c = {{1.0, 4.0}, {2.0, 0.5}};
  const double base = ot::transport(a, b, [&](int i, int j) { return c[i][j]; }).cost;

  const std::vector<double> a_pad = {0.0, 0.4, 0.0, 0.6};
  const std::vector<double> b_pad = {0.7, 0.0, 0.3};
  const std::vector<std::vector<double>> c_pad = {
      {9.0, 9.0, 9.0}, {1.0, 9.0, 4.0}, {9.0, 9.0, 9.0}, {2.0, 9.0, 0.5}};
  const double padded =
      ot::transport(a_pad, b_pad, [&](int i, int j) { return c_pad[i][j]; }).cost;
  CHECK(std::abs(base - padded) <= 1e-15);
}

TEST_CASE("repeat runs are bit-identical") {
  Rng rng(31337);
  const Instance inst = random_instance(rng, true);
  const auto r1 = ot::transport(inst.a, inst.b, [&](int i, int j) { return inst.c[i][j]; });
  const auto r2 = ot::transport(inst.a, inst.b, [&](int i, int j) { return inst.c[i][j]; });
  CHECK(r1.cost == r2.cost);
  CHECK(r1.pivots == r2.pivots);
}

TEST_CASE("sinkhorn approaches the exact cost at small regularization") {
  Rng rng(555);
  Instance inst;
  inst.a = {0.25, 0.25, 0.25, 0.25};
  inst.b = {0.1, 0.2, 0.3, 0.4};
  inst.c.assign(4, std::vector<double>(4, 0.0));
  for (auto& row : inst.c) {
    for (double& x : row) x = rng.uniform();
  }
  const double exact = solve(inst);
  const double approx = ot::sinkhorn(inst.a, inst.b,
                                     [&](int i, int j) { return inst.c[i][j]; }, 1e-3);
  CHECK(std::abs(approx - exact) <= 0.05);
  CHECK(approx >= exact - 1e-9);  // any feasible plan costs at least the optimum
  CHECK_THROWS_AS(ot::sinkhorn(inst.a, inst.b,
                               [&](int i, int j) { return inst.c[i][j]; }, 0.0),
                  UsageError);
}

TEST_CASE("a mid-size instance keeps exact and entropic solvers in agreement") {
  Rng rng(8080);
  const int m = 100, k = 120;
  std::vector<double> a(m), b(k);
  double ta = 0.0, tb = 0.0;
  for (double& x : a) {
    x = rng.uniform() + 0.01;
    ta += x;
  }
  for (double& x : b) {
    x = rng.uniform() + 0.01;
    tb += x;
  }
  for (double& x : a) x /= ta;
  for (double& x : b) x /= tb;
  std::vector<std::pair<double, double>> pa(m), pb(k);
  for (auto& p : pa) p = {rng.uniform(), rng.uniform()};
  for (auto& p : pb) p = {rng.uniform(), rng.uniform()};
  const auto cost = [&](int i, int j) {
    return std::hypot(pa[i].first - pb[j].first, pa[i].second - pb[j].second);
  };
  const double exact = ot::transport(a, b, cost).cost;
  const double approx = ot::sinkhorn(a, b, cost, 0.01);
  CHECK(approx >= exact - 1e-9);
  CHECK(std::abs(approx - exact) <= 0.1);
}

}  // TEST_SUITE
