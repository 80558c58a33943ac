#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "dynlm/common.hpp"
#include "dynlm/discretization.hpp"
#include "dynlm/rng.hpp"

using namespace dynlm;

namespace {

Dataset dataset_from_states(int dim, const std::vector<std::vector<double>>& states) {
  Dataset d;
  d.system = dim == 2 ? SystemSpec::henon() : SystemSpec::lorenz();
  Trajectory t;
  t.dim = dim;
  t.tau = 1.0;
  for (const auto& s : states) {
    for (double v : s) t.states.push_back(v);
  }
  d.trajectories.push_back(std::move(t));
  return d;
}

Grid unit_square_grid(int n) {
  Grid g;
  g.dim = 2;
  g.n = n;
  g.lo = {0.0, 0.0};
  g.hi = {1.0, 1.0};
  return g;
}

}  // namespace

TEST_SUITE("discretization") {

TEST_CASE("fit_grid with zero margin is the exact bounding box") {
  const Dataset d = dataset_from_states(2, {{0.0, 0.0}, {1.0, 1.0}});
  const Grid g = fit_grid(d, 2, 0.0);
  CHECK(g.dim == 2);
  CHECK(g.n == 2);
  CHECK(g.lo == std::vector<double>{0.0, 0.0});
  CHECK(g.hi == std::vector<double>{1.0, 1.0});
  CHECK(g.vocab() == 4);
}

TEST_CASE("fit_grid margin expands each side by a span fraction") {
  const Dataset d = dataset_from_states(2, {{0.0, 2.0}, {10.0, 4.0}});
  const Grid g = fit_grid(d, 5, 0.1);
  CHECK(g.lo[0] == doctest::Approx(-1.0));
  CHECK(g.hi[0] == doctest::Approx(11.0));
  CHECK(g.lo[1] == doctest::Approx(1.8));
  CHECK(g.hi[1] == doctest::Approx(4.2));
}

TEST_CASE("degenerate dimension is widened and reported") {
  const Dataset d = dataset_from_states(2, {{0.5, 3.0}, {0.5, 4.0}});
  std::vector<std::string> warnings;
  const Grid g = fit_grid(d, 4, 0.0, &warnings);
  CHECK(g.hi[0] - g.lo[0] == doctest::Approx(2e-6));
  CHECK(g.lo[0] == doctest::Approx(0.5 - 1e-6));
  CHECK(warnings.size() == 1);
}

TEST_CASE("fit_grid rejects empty data and bad n") {
  Dataset empty;
  empty.system = SystemSpec::henon();
  CHECK_THROWS_AS(fit_grid(empty, 4), DataError);
  const Dataset d = dataset_from_states(2, {{0.0, 0.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(fit_grid(d, 0), DataError);
}

TEST_CASE("encode follows dimension-0-most-significant flattening") {
  const Grid g = unit_square_grid(2);
  const double x[2] = {0.25, 0.75};
  CHECK(encode_state(g, x) == 1);  // idx = (0, 1)
  const double y[2] = {0.75, 0.25};
  CHECK(encode_state(g, y) == 2);  // idx = (1, 0)
}

TEST_CASE("interior boundary points go to the upper cell") {
  const Grid g = unit_square_grid(2);
  const double x[2] = {0.5, 0.5};
  CHECK(encode_state(g, x) == 3);  // idx = (1, 1)
}

TEST_CASE("the global upper boundary clamps to the last cell") {
  const Grid g = unit_square_grid(2);
  const double x[2] = {1.0, 1.0};
  CHECK(encode_state(g, x) == 3);
}

TEST_CASE("out-of-box states clamp to the nearest boundary cell") {
  const Grid g = unit_square_grid(2);
  const double x[2] = {-5.0, 2.0};
  CHECK(encode_state(g, x) == 1);  // idx = (0, 1)
}

TEST_CASE("non-finite states are rejected") {
  const Grid g = unit_square_grid(2);
  const double x[2] = {std::nan(""), 0.5};
  CHECK_THROWS_AS(encode_state(g, x), DataError);
}

TEST_CASE("decode returns cell centers") {
  const Grid g = unit_square_grid(2);
  double out[2];
  decode_token(g, 1, out);
  CHECK(out[0] == doctest::Approx(0.25));
  CHECK(out[1] == doctest::Approx(0.75));

  Grid line;
  line.dim = 1;
  line.n = 50;
  line.lo = {0.0};
  line.hi = {10.0};
  double c;
  decode_token(line, 0, &c);
  CHECK(c == doctest::Approx(0.1));  // w = 0.2, first center
}

TEST_CASE("decode rejects out-of-range ids") {
  const Grid g = unit_square_grid(2);
  double out[2];
  CHECK_THROWS_AS(decode_token(g, 4, out), DataError);
}

TEST_CASE("encode(decode(t)) round-trips every token") {
  Grid g;
  g.dim = 3;
  g.n = 4;
  g.lo = {-1.0, 0.0, 2.0};
  g.hi = {1.0, 5.0, 2.5};
  double out[3];
  for (TokenId t = 0; t < g.vocab(); ++t) {
    decode_token(g, t, out);
    CHECK(encode_state(g, out) == t);
  }
}

TEST_CASE("quantization error is bounded by the cell radius") {
  Grid g;
  g.dim = 2;
  g.n = 7;
  g.lo = {-2.0, 1.0};
  g.hi = {3.0, 9.0};
  const double radius = cell_radius(g);
  Rng rng(5);
  double out[2];
  for (int i = 0; i < 2000; ++i) {
    const double x[2] = {rng.uniform(-2.0, 3.0), rng.uniform(1.0, 9.0)};
    decode_token(g, encode_state(g, x), out);
    const double d = std::hypot(out[0] - x[0], out[1] - x[1]);
    CHECK(d <= radius + 1e-12);
  }
}

TEST_CASE("increasing a coordinate never decreases its index") {
  Grid g;
  g.dim = 1;
  g.n = 13;
  g.lo = {0.0};
  g.hi = {1.0};
  TokenId prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = -0.2 + 1.4 * i / 1000.0;
    const TokenId t = encode_state(g, &x);
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("cell_radius is half the cell diagonal") {
  const Grid g = unit_square_grid(2);
  CHECK(cell_radius(g) == doctest::Approx(0.35355).epsilon(1e-4));
  Grid line;
  line.dim = 1;
  line.n = 5;
  line.lo = {0.0};
  line.hi = {1.0};
  CHECK(cell_radius(line) == doctest::Approx(0.1));
  Grid doubled = g;
  doubled.lo = {0.0, 0.0};
  doubled.hi = {2.0, 2.0};
  CHECK(cell_radius(doubled) == doctest::Approx(2.0 * cell_radius(g)));
}

TEST_CASE("trajectory codec preserves length and tau") {
  const Grid g = unit_square_grid(4);
  Trajectory t;
  t.dim = 2;
  t.tau = 0.25;
  Rng rng(6);
  for (int i = 0; i < 40; ++i) {
    t.states.push_back(rng.uniform());
    t.states.push_back(rng.uniform());
  }
  const std::vector<TokenId> tokens = encode_trajectory(g, t);
  CHECK(tokens.size() == 40);
  for (const TokenId id : tokens) CHECK(id < g.vocab());
  const Trajectory back = decode_sequence(g, tokens, t.tau);
  CHECK(back.length() == 40);
  CHECK(back.tau == 0.25);
  const double radius = cell_radius(g);
  for (std::size_t i = 0; i < 40; ++i) {
    const double d = std::hypot(back.state(i)[0] - t.state(i)[0],
                                back.state(i)[1] - t.state(i)[1]);
    CHECK(d <= radius + 1e-12);
  }
}

TEST_CASE("empty trajectory encodes to an empty sequence") {
  const Grid g = unit_square_grid(4);
  Trajectory t;
  t.dim = 2;
  CHECK(encode_trajectory(g, t).empty());
}

}  // TEST_SUITE
