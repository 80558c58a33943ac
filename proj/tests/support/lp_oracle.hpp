#pragma once

// Ground-truth transport solver for small instances: dense two-phase
// tableau simplex with Bland's rule. Deliberately naive and slow; shares
// no code or algorithmic structure with the library's network solver.

#include <stdexcept>
#include <vector>

namespace lp_oracle {

// min sum c[i][j] x[ij]  s.t.  sum_j x[ij] = a[i], sum_i x[ij] = b[j], x >= 0.
// a and b must be balanced. The last demand constraint is redundant and is
// dropped so the constraint matrix has full row rank.
inline double transport_cost(const std::vector<double>& a, const std::vector<double>& b,
                             const std::vector<std::vector<double>>& c) {
  const int m = static_cast<int>(a.size());
  const int k = static_cast<int>(b.size());
  const int n = m * k;         // structural variables
  const int rows = m + k - 1;  // one artificial per remaining constraint
  const int cols = n + rows;
  std::vector<std::vector<double>> t(rows, std::vector<double>(cols + 1, 0.0));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) t[i][i * k + j] = 1.0;
    t[i][cols] = a[i];
  }
  for (int j = 0; j + 1 < k; ++j) {
    for (int i = 0; i < m; ++i) t[m + j][i * k + j] = 1.0;
    t[m + j][cols] = b[j];
  }
  std::vector<int> basis(rows);
  for (int r = 0; r < rows; ++r) {
    t[r][n + r] = 1.0;
    basis[r] = n + r;
  }

  auto run_phase = [&](const std::vector<double>& cost, int enter_limit) {
    for (;;) {
      // Bland: the smallest-index column with a negative reduced cost
      // enters; among minimum-ratio rows the smallest basic index leaves.
      int enter = -1;
      for (int j = 0; j < enter_limit && enter < 0; ++j) {
        double rj = cost[j];
        for (int r = 0; r < rows; ++r) rj -= cost[basis[r]] * t[r][j];
        if (rj < -1e-9) enter = j;
      }
      if (enter < 0) return;
      int leave = -1;
      double best = 0.0;
      for (int r = 0; r < rows; ++r) {
        if (t[r][enter] > 1e-11) {
          const double ratio = t[r][cols] / t[r][enter];
          if (leave < 0 || ratio < best - 1e-15 ||
              (ratio < best + 1e-15 && basis[r] < basis[leave])) {
            leave = r;
            best = ratio;
          }
        }
      }
      if (leave < 0) throw std::runtime_error("lp oracle: unbounded");
      const double piv = t[leave][enter];
      for (int j = 0; j <= cols; ++j) t[leave][j] /= piv;
      for (int r = 0; r < rows; ++r) {
        if (r == leave || t[r][enter] == 0.0) continue;
        const double f = t[r][enter];
        for (int j = 0; j <= cols; ++j) t[r][j] -= f * t[leave][j];
      }
      basis[leave] = enter;
    }
  };

  std::vector<double> phase1(cols, 0.0);
  for (int r = 0; r < rows; ++r) phase1[n + r] = 1.0;
  run_phase(phase1, cols);
  double infeasible = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (basis[r] >= n) infeasible += t[r][cols];
  }
  if (infeasible > 1e-7) throw std::runtime_error("lp oracle: infeasible");

  std::vector<double> phase2(cols, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) phase2[i * k + j] = c[i][j];
  }
  run_phase(phase2, n);  // artificial columns are shut out of phase 2

  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (basis[r] < n) total += phase2[basis[r]] * t[r][cols];
  }
  return total;
}

}  // namespace lp_oracle
