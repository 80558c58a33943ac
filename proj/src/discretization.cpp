#include "dynlm/discretization.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dynlm/common.hpp"

namespace dynlm {

Grid fit_grid(const Dataset& dataset, int n, double margin,
              std::vector<std::string>* warnings) {
  if (dataset.trajectories.empty() || dataset.total_states() == 0)
    throw DataError("fit_grid: empty dataset");
  if (n < 1) throw DataError("fit_grid: n must be >= 1");
  if (margin < 0.0) throw DataError("fit_grid: margin must be >= 0");
  const int d = dataset.trajectories.front().dim;
  Grid grid;
  grid.dim = d;
  grid.n = n;
  grid.lo.assign(d, std::numeric_limits<double>::infinity());
  grid.hi.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto& traj : dataset.trajectories) {
    if (traj.dim != d) throw DataError("fit_grid: mixed trajectory dimensions");
    for (std::size_t k = 0; k < traj.length(); ++k) {
      const double* x = traj.state(k);
      for (int j = 0; j < d; ++j) {
        if (!std::isfinite(x[j])) throw DataError("fit_grid: non-finite state");
        grid.lo[j] = std::fmin(grid.lo[j], x[j]);
        grid.hi[j] = std::fmax(grid.hi[j], x[j]);
      }
    }
  }
  // 2^31 keeps token ids inside the u32 file format with headroom
  double vocab = 1.0;
  for (int j = 0; j < d; ++j) vocab *= double(n);
  if (vocab > 2147483648.0) throw DataError("fit_grid: vocabulary n^d too large");
  for (int j = 0; j < d; ++j) {
    const double span = grid.hi[j] - grid.lo[j];
    if (span == 0.0) {
      grid.lo[j] -= 1e-6;
      grid.hi[j] += 1e-6;
      if (warnings)
        warnings->push_back("dimension " + std::to_string(j) +
                            " is degenerate; widened by 1e-6 per side");
    } else {
      grid.lo[j] -= margin * span;
      grid.hi[j] += margin * span;
    }
  }
  return grid;
}

TokenId encode_state(const Grid& grid, const double* x) {
  std::uint64_t id = 0;
  for (int j = 0; j < grid.dim; ++j) {
    if (!std::isfinite(x[j])) throw DataError("encode_state: non-finite state");
    const double w = grid.width(j);
    long idx = long(std::floor((x[j] - grid.lo[j]) / w));
    if (idx < 0) idx = 0;
    if (idx > grid.n - 1) idx = grid.n - 1;
    id = id * std::uint64_t(grid.n) + std::uint64_t(idx);
  }
  return TokenId(id);
}

void decode_token(const Grid& grid, TokenId t, double* out) {
  if (std::uint64_t(t) >= grid.vocab())
    throw DataError("decode_token: token id " + std::to_string(t) +
                    " out of range for vocabulary " + std::to_string(grid.vocab()));
  std::uint64_t rest = t;
  for (int j = grid.dim - 1; j >= 0; --j) {
    const std::uint64_t idx = rest % std::uint64_t(grid.n);
    rest /= std::uint64_t(grid.n);
    out[j] = grid.lo[j] + (double(idx) + 0.5) * grid.width(j);
  }
}

std::vector<TokenId> encode_trajectory(const Grid& grid, const Trajectory& traj) {
  if (traj.dim != grid.dim) throw DataError("encode_trajectory: dimension mismatch");
  std::vector<TokenId> out;
  out.reserve(traj.length());
  for (std::size_t k = 0; k < traj.length(); ++k)
    out.push_back(encode_state(grid, traj.state(k)));
  return out;
}

Trajectory decode_sequence(const Grid& grid, const std::vector<TokenId>& tokens,
                           double tau) {
  Trajectory traj;
  traj.dim = grid.dim;
  traj.tau = tau;
  traj.states.resize(tokens.size() * grid.dim);
  for (std::size_t k = 0; k < tokens.size(); ++k)
    decode_token(grid, tokens[k], traj.state(k));
  return traj;
}

double cell_radius(const Grid& grid) {
  double s = 0.0;
  for (int j = 0; j < grid.dim; ++j) {
    const double w = grid.width(j);
    s += w * w;
  }
  return 0.5 * std::sqrt(s);
}

}  // namespace dynlm
