#pragma once

#include <cstdint>
#include <vector>

#include "dynlm/dynamics.hpp"

namespace dynlm {

using TokenId = std::uint32_t;

// Equidistant grid over a bounding box. Token ids flatten per-dimension
// indices with dimension 0 most significant; this order is stored with
// the grid file so encodings stay portable.
struct Grid {
  int dim = 0;
  int n = 0;
  std::vector<double> lo;
  std::vector<double> hi;

  std::uint64_t vocab() const {
    std::uint64_t v = 1;
    for (int j = 0; j < dim; ++j) v *= std::uint64_t(n);
    return v;
  }
  double width(int j) const { return (hi[j] - lo[j]) / n; }

  bool operator==(const Grid& other) const = default;
};

// Bounding box = training min/max expanded by margin*(max-min) per side.
// A degenerate dimension (max == min) is widened by an absolute 1e-6 on
// each side and reported through the optional warning sink.
Grid fit_grid(const Dataset& dataset, int n, double margin = 1e-3,
              std::vector<std::string>* warnings = nullptr);

TokenId encode_state(const Grid& grid, const double* x);
void decode_token(const Grid& grid, TokenId t, double* out);

std::vector<TokenId> encode_trajectory(const Grid& grid, const Trajectory& traj);
Trajectory decode_sequence(const Grid& grid, const std::vector<TokenId>& tokens,
                           double tau);

// Half the cell diagonal: the radius of the sphere wrapped around one cell.
double cell_radius(const Grid& grid);

}  // namespace dynlm
