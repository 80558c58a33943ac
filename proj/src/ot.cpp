#include "dynlm/ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include "dynlm/common.hpp"

namespace dynlm::ot {

namespace {

// Masses smaller than this are treated as exhausted during initialization.
// Empirical distributions carry masses that are multiples of 1/n, far above
// this threshold; anything below it is accumulated roundoff.
constexpr double kDeadMass = 1e-15;

// Dense cost caches are capped at 32 MB; larger instances evaluate the cost
// functor on demand.
constexpr std::size_t kDenseArcLimit = std::size_t{4} * 1024 * 1024;

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

struct BasisArc {
  int src = 0;
  int snk = 0;
  double flow = 0.0;
};

class SimplexSolver {
 public:
  // rows/cols remap solver-local indices to caller indices for the cost
  // functor; zero-mass supports have already been filtered out.
  SimplexSolver(std::vector<double> supply, std::vector<double> demand,
                std::vector<int> rows, std::vector<int> cols,
                const std::function<double(int, int)>& cost_fn)
      : a_(std::move(supply)),
        b_(std::move(demand)),
        fn_(cost_fn),
        rows_(std::move(rows)),
        cols_(std::move(cols)) {
    m_ = static_cast<int>(a_.size());
    k_ = static_cast<int>(b_.size());
    const std::size_t arcs = static_cast<std::size_t>(m_) * static_cast<std::size_t>(k_);
    double cmax = 0.0;
    if (arcs <= kDenseArcLimit) {
      dense_.resize(arcs);
      for (int i = 0; i < m_; ++i) {
        for (int j = 0; j < k_; ++j) {
          const double c = fn_(rows_at(i), cols_at(j));
          if (!(c >= 0.0)) throw DataError("transport cost must be finite and nonnegative");
          dense_[static_cast<std::size_t>(i) * k_ + j] = c;
          cmax = std::max(cmax, c);
        }
      }
    } else {
      for (int i = 0; i < m_; ++i) {
        for (int j = 0; j < k_; ++j) {
          const double c = fn_(rows_at(i), cols_at(j));
          if (!(c >= 0.0)) throw DataError("transport cost must be finite and nonnegative");
          cmax = std::max(cmax, c);
        }
      }
    }
    tol_ = 1e-11 * (1.0 + cmax);
    block_ = std::max<std::size_t>(256, static_cast<std::size_t>(m_) + k_);
  }

  TransportResult solve() {
    const std::size_t arcs = static_cast<std::size_t>(m_) * static_cast<std::size_t>(k_);
    if (arcs > kDenseArcLimit) {
      northwest_init();
    } else {
      vogel_init();
    }
    complete_tree();
    u_.assign(m_, 0.0);
    v_.assign(k_, 0.0);

    const std::uint64_t pivot_cap =
        20'000'000ull + 512ull * (static_cast<std::uint64_t>(m_) + k_);
    const int degen_threshold = 2 * (m_ + k_) + 64;
    std::uint64_t pivots = 0;
    int degen_streak = 0;
    bool bland = false;
    for (;;) {
      compute_duals();
      const std::int64_t entering = bland ? price_bland() : price_block();
      if (entering < 0) break;
      const double theta = pivot(static_cast<std::size_t>(entering));
      ++pivots;
      if (theta <= 0.0) {
        if (++degen_streak > degen_threshold) bland = true;
      } else {
        degen_streak = 0;
        bland = false;
      }
      if (pivots > pivot_cap) throw NumericError("transport solver exceeded pivot limit");
    }

    TransportResult result;
    result.pivots = pivots;
    for (const BasisArc& arc : basis_) result.cost += arc.flow * cost(arc.src, arc.snk);
    return result;
  }

 private:
  int rows_at(int i) const { return rows_.empty() ? i : rows_[i]; }
  int cols_at(int j) const { return cols_.empty() ? j : cols_[j]; }

  double cost(int i, int j) const {
    if (!dense_.empty()) return dense_[static_cast<std::size_t>(i) * k_ + j];
    return fn_(rows_at(i), cols_at(j));
  }

  void add_basis_arc(int i, int j, double flow) {
    const int idx = static_cast<int>(basis_.size());
    basis_.push_back({i, j, flow});
    adj_[i].push_back(idx);
    adj_[m_ + j].push_back(idx);
  }

  // Vogel's approximation: repeatedly allocate in the row or column whose
  // two cheapest open cells differ the most. Caches the two cheapest
  // candidates per line and revalidates lazily as lines close.
  void vogel_init() {
    adj_.assign(m_ + k_, {});
    basis_.reserve(static_cast<std::size_t>(m_) + k_);
    std::vector<double> rem_a = a_;
    std::vector<double> rem_b = b_;
    std::vector<char> row_live(m_, 1), col_live(k_, 1);
    int live_rows = m_, live_cols = k_;
    std::vector<int> row_m1(m_, -1), row_m2(m_, -1);
    std::vector<int> col_m1(k_, -1), col_m2(k_, -1);

    auto recompute_row = [&](int i) {
      int m1 = -1, m2 = -1;
      double c1 = std::numeric_limits<double>::infinity();
      double c2 = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k_; ++j) {
        if (!col_live[j]) continue;
        const double c = cost(i, j);
        if (c < c1) {
          c2 = c1;
          m2 = m1;
          c1 = c;
          m1 = j;
        } else if (c < c2) {
          c2 = c;
          m2 = j;
        }
      }
      row_m1[i] = m1;
      row_m2[i] = m2;
    };
    auto recompute_col = [&](int j) {
      int m1 = -1, m2 = -1;
      double c1 = std::numeric_limits<double>::infinity();
      double c2 = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        if (!row_live[i]) continue;
        const double c = cost(i, j);
        if (c < c1) {
          c2 = c1;
          m2 = m1;
          c1 = c;
          m1 = i;
        } else if (c < c2) {
          c2 = c;
          m2 = i;
        }
      }
      col_m1[j] = m1;
      col_m2[j] = m2;
    };
    for (int i = 0; i < m_; ++i) recompute_row(i);
    for (int j = 0; j < k_; ++j) recompute_col(j);

    auto row_penalty = [&](int i) -> double {
      if (row_m1[i] < 0 || !col_live[row_m1[i]] ||
          (row_m2[i] >= 0 && !col_live[row_m2[i]])) {
        recompute_row(i);
      }
      if (row_m1[i] < 0) return -1.0;
      if (row_m2[i] < 0) return cost(i, row_m1[i]);
      return cost(i, row_m2[i]) - cost(i, row_m1[i]);
    };
    auto col_penalty = [&](int j) -> double {
      if (col_m1[j] < 0 || !row_live[col_m1[j]] ||
          (col_m2[j] >= 0 && !row_live[col_m2[j]])) {
        recompute_col(j);
      }
      if (col_m1[j] < 0) return -1.0;
      if (col_m2[j] < 0) return cost(col_m1[j], j);
      return cost(col_m1[j], j) - cost(col_m2[j], j);
    };

    while (live_rows > 0 && live_cols > 0) {
      double best_pen = -1.0;
      bool best_is_col = false;
      int best_line = -1;
      for (int i = 0; i < m_; ++i) {
        if (!row_live[i]) continue;
        const double p = row_penalty(i);
        if (p > best_pen) {
          best_pen = p;
          best_is_col = false;
          best_line = i;
        }
      }
      for (int j = 0; j < k_; ++j) {
        if (!col_live[j]) continue;
        const double p = col_penalty(j);
        if (p > best_pen) {
          best_pen = p;
          best_is_col = true;
          best_line = j;
        }
      }
      if (best_line < 0) break;

      int i, j;
      if (best_is_col) {
        j = best_line;
        i = col_m1[j];
      } else {
        i = best_line;
        j = row_m1[i];
      }
      const double alloc = std::min(rem_a[i], rem_b[j]);
      add_basis_arc(i, j, alloc);
      rem_a[i] -= alloc;
      rem_b[j] -= alloc;
      if (rem_a[i] <= kDeadMass) {
        rem_a[i] = 0.0;
        row_live[i] = 0;
        --live_rows;
      }
      if (rem_b[j] <= kDeadMass) {
        rem_b[j] = 0.0;
        col_live[j] = 0;
        --live_cols;
      }
    }

    for (int i = 0; i < m_; ++i) {
      if (rem_a[i] > 1e-9) throw NumericError("transport initialization left unassigned supply");
    }
    for (int j = 0; j < k_; ++j) {
      if (rem_b[j] > 1e-9) throw NumericError("transport initialization left unassigned demand");
    }
  }

  // Cheap O(m + k) start for instances too large for a dense Vogel pass.
  void northwest_init() {
    adj_.assign(m_ + k_, {});
    basis_.reserve(static_cast<std::size_t>(m_) + k_);
    std::vector<double> rem_a = a_;
    std::vector<double> rem_b = b_;
    int i = 0, j = 0;
    while (i < m_ && j < k_) {
      const double alloc = std::min(rem_a[i], rem_b[j]);
      add_basis_arc(i, j, alloc);
      rem_a[i] -= alloc;
      rem_b[j] -= alloc;
      const bool row_done = rem_a[i] <= kDeadMass;
      const bool col_done = rem_b[j] <= kDeadMass;
      if (row_done && col_done) {
        ++i;
        ++j;
      } else if (row_done) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // The basis must be a spanning tree with exactly m + k - 1 arcs;
  // initialization can leave a forest when lines exhaust simultaneously.
  void complete_tree() {
    UnionFind uf(m_ + k_);
    for (const BasisArc& arc : basis_) {
      if (!uf.unite(arc.src, m_ + arc.snk)) {
        throw NumericError("transport initialization produced a cyclic basis");
      }
    }
    int needed = m_ + k_ - 1 - static_cast<int>(basis_.size());
    for (int i = 0; i < m_ && needed > 0; ++i) {
      for (int j = 0; j < k_ && needed > 0; ++j) {
        if (uf.unite(i, m_ + j)) {
          add_basis_arc(i, j, 0.0);
          --needed;
        }
      }
    }
    if (static_cast<int>(basis_.size()) != m_ + k_ - 1) {
      throw NumericError("transport basis is not a spanning tree");
    }
  }

  // Tree arcs satisfy cost = u[src] + v[snk]; breadth-first from source 0.
  void compute_duals() {
    seen_.assign(m_ + k_, 0);
    std::queue<int> queue;
    u_[0] = 0.0;
    seen_[0] = 1;
    queue.push(0);
    int visited = 1;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop();
      for (const int ai : adj_[node]) {
        const BasisArc& arc = basis_[ai];
        const int other = (node == arc.src) ? m_ + arc.snk : arc.src;
        if (seen_[other]) continue;
        if (other >= m_) {
          v_[arc.snk] = cost(arc.src, arc.snk) - u_[arc.src];
        } else {
          u_[arc.src] = cost(arc.src, arc.snk) - v_[arc.snk];
        }
        seen_[other] = 1;
        ++visited;
        queue.push(other);
      }
    }
    if (visited != m_ + k_) throw NumericError("transport basis tree is disconnected");
  }

  // Scans arcs in blocks from a rotating cursor and returns the most
  // negative reduced cost in the first block that has one, or -1 at
  // optimality. Basic arcs price to ~0 and are never selected.
  std::int64_t price_block() {
    const std::size_t total = static_cast<std::size_t>(m_) * static_cast<std::size_t>(k_);
    std::size_t pos = cursor_ % total;
    int i = static_cast<int>(pos / k_);
    int j = static_cast<int>(pos % k_);
    std::size_t scanned = 0;
    while (scanned < total) {
      const std::size_t chunk = std::min(block_, total - scanned);
      std::int64_t best = -1;
      double best_r = -tol_;
      for (std::size_t s = 0; s < chunk; ++s) {
        const double r = cost(i, j) - u_[i] - v_[j];
        if (r < best_r) {
          best_r = r;
          best = static_cast<std::int64_t>(pos);
        }
        ++pos;
        ++j;
        if (j == k_) {
          j = 0;
          ++i;
        }
        if (pos == total) {
          pos = 0;
          i = 0;
          j = 0;
        }
      }
      scanned += chunk;
      if (best >= 0) {
        cursor_ = (static_cast<std::size_t>(best) + 1) % total;
        return best;
      }
    }
    return -1;
  }

  // Anti-cycling fallback: first eligible arc in fixed index order.
  std::int64_t price_bland() {
    std::size_t pos = 0;
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < k_; ++j, ++pos) {
        if (cost(i, j) - u_[i] - v_[j] < -tol_) {
          cursor_ = (pos + 1) % (static_cast<std::size_t>(m_) * k_);
          return static_cast<std::int64_t>(pos);
        }
      }
    }
    return -1;
  }

  // Brings arc (i, j) into the basis. The unique tree path from the entering
  // sink back to the entering source alternates decreasing and increasing
  // flow; the tightest decreasing arc leaves. Returns the shifted flow.
  double pivot(std::size_t entering) {
    const int ie = static_cast<int>(entering / k_);
    const int je = static_cast<int>(entering % k_);
    const int src_node = ie;
    const int snk_node = m_ + je;

    parent_node_.assign(m_ + k_, -1);
    parent_arc_.assign(m_ + k_, -1);
    seen_.assign(m_ + k_, 0);
    std::queue<int> queue;
    seen_[src_node] = 1;
    queue.push(src_node);
    while (!queue.empty() && !seen_[snk_node]) {
      const int node = queue.front();
      queue.pop();
      for (const int ai : adj_[node]) {
        const BasisArc& arc = basis_[ai];
        const int other = (node == arc.src) ? m_ + arc.snk : arc.src;
        if (seen_[other]) continue;
        seen_[other] = 1;
        parent_node_[other] = node;
        parent_arc_[other] = ai;
        queue.push(other);
      }
    }
    if (!seen_[snk_node]) throw NumericError("transport basis tree is disconnected");

    // Walk snk -> src; arcs alternate -theta, +theta starting with -theta.
    cycle_arcs_.clear();
    cycle_signs_.clear();
    int cur = snk_node;
    int sign = -1;
    while (cur != src_node) {
      cycle_arcs_.push_back(parent_arc_[cur]);
      cycle_signs_.push_back(sign);
      sign = -sign;
      cur = parent_node_[cur];
    }

    double theta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    long long leaving_key = 0;
    for (std::size_t p = 0; p < cycle_arcs_.size(); ++p) {
      if (cycle_signs_[p] > 0) continue;
      const BasisArc& arc = basis_[cycle_arcs_[p]];
      const long long key =
          static_cast<long long>(arc.src) * k_ + arc.snk;
      if (arc.flow < theta || (arc.flow == theta && key < leaving_key)) {
        theta = arc.flow;
        leaving = cycle_arcs_[p];
        leaving_key = key;
      }
    }
    if (leaving < 0) throw NumericError("transport pivot found no leaving arc");

    for (std::size_t p = 0; p < cycle_arcs_.size(); ++p) {
      BasisArc& arc = basis_[cycle_arcs_[p]];
      arc.flow += cycle_signs_[p] > 0 ? theta : -theta;
      if (arc.flow < 0.0) arc.flow = 0.0;
    }

    BasisArc& slot = basis_[leaving];
    detach_arc(leaving, slot.src, m_ + slot.snk);
    slot = {ie, je, theta};
    adj_[ie].push_back(leaving);
    adj_[m_ + je].push_back(leaving);
    return theta;
  }

  void detach_arc(int arc_idx, int node_a, int node_b) {
    for (const int node : {node_a, node_b}) {
      auto& list = adj_[node];
      list.erase(std::find(list.begin(), list.end(), arc_idx));
    }
  }

  std::vector<double> a_;
  std::vector<double> b_;
  const std::function<double(int, int)>& fn_;
  std::vector<int> rows_;
  std::vector<int> cols_;
  int m_ = 0;
  int k_ = 0;
  std::vector<double> dense_;
  double tol_ = 0.0;
  std::size_t block_ = 256;
  std::size_t cursor_ = 0;
  std::vector<BasisArc> basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> u_;
  std::vector<double> v_;
  std::vector<char> seen_;
  std::vector<int> parent_node_;
  std::vector<int> parent_arc_;
  std::vector<int> cycle_arcs_;
  std::vector<int> cycle_signs_;
};

void check_masses(const std::vector<double>& w, const char* side) {
  for (const double x : w) {
    if (!std::isfinite(x) || x < 0.0) {
      throw DataError(std::string("transport ") + side + " masses must be finite and nonnegative");
    }
  }
}

}  // namespace

TransportResult transport(const std::vector<double>& supply,
                          const std::vector<double>& demand,
                          const std::function<double(int, int)>& cost) {
  check_masses(supply, "supply");
  check_masses(demand, "demand");
  const double sa = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double sb = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (sa == 0.0 && sb == 0.0) return {};
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, std::max(sa, sb))) {
    throw DataError("transport supply and demand totals differ");
  }

  std::vector<int> rows, cols;
  std::vector<double> a, b;
  for (int i = 0; i < static_cast<int>(supply.size()); ++i) {
    if (supply[i] > 0.0) {
      rows.push_back(i);
      a.push_back(supply[i]);
    }
  }
  const double scale = sa / sb;
  for (int j = 0; j < static_cast<int>(demand.size()); ++j) {
    if (demand[j] > 0.0) {
      cols.push_back(j);
      b.push_back(demand[j] * scale);
    }
  }
  if (a.empty() || b.empty()) throw DataError("transport requires positive mass on both sides");

  SimplexSolver solver(std::move(a), std::move(b), std::move(rows), std::move(cols), cost);
  return solver.solve();
}

double sinkhorn(const std::vector<double>& supply, const std::vector<double>& demand,
                const std::function<double(int, int)>& cost, double epsilon,
                int max_iterations, double tolerance) {
  check_masses(supply, "supply");
  check_masses(demand, "demand");
  if (!(epsilon > 0.0)) throw UsageError("sinkhorn epsilon must be positive");

  std::vector<int> rows, cols;
  std::vector<double> a, b;
  for (int i = 0; i < static_cast<int>(supply.size()); ++i) {
    if (supply[i] > 0.0) {
      rows.push_back(i);
      a.push_back(supply[i]);
    }
  }
  for (int j = 0; j < static_cast<int>(demand.size()); ++j) {
    if (demand[j] > 0.0) {
      cols.push_back(j);
      b.push_back(demand[j]);
    }
  }
  if (a.empty() || b.empty()) throw DataError("sinkhorn requires positive mass on both sides");
  const int m = static_cast<int>(a.size());
  const int k = static_cast<int>(b.size());

  std::vector<double> f(m, 0.0), g(k, 0.0);
  std::vector<double> log_a(m), log_b(k);
  for (int i = 0; i < m; ++i) log_a[i] = std::log(a[i]);
  for (int j = 0; j < k; ++j) log_b[j] = std::log(b[j]);

  auto c = [&](int i, int j) { return cost(rows[i], cols[j]); };

  for (int iter = 0; iter < max_iterations; ++iter) {
    for (int i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) mx = std::max(mx, (g[j] - c(i, j)) / epsilon);
      double sum = 0.0;
      for (int j = 0; j < k; ++j) sum += std::exp((g[j] - c(i, j)) / epsilon - mx);
      f[i] = epsilon * (log_a[i] - mx - std::log(sum));
    }
    for (int j = 0; j < k; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) mx = std::max(mx, (f[i] - c(i, j)) / epsilon);
      double sum = 0.0;
      for (int i = 0; i < m; ++i) sum += std::exp((f[i] - c(i, j)) / epsilon - mx);
      g[j] = epsilon * (log_b[j] - mx - std::log(sum));
    }
    if (iter % 10 == 9 || iter == max_iterations - 1) {
      double err = 0.0;
      for (int i = 0; i < m; ++i) {
        double row = 0.0;
        for (int j = 0; j < k; ++j) row += std::exp((f[i] + g[j] - c(i, j)) / epsilon);
        err = std::max(err, std::abs(row - a[i]));
      }
      if (err < tolerance) break;
    }
  }

  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) {
      const double cij = c(i, j);
      total += std::exp((f[i] + g[j] - cij) / epsilon) * cij;
    }
  }
  return total;
}

}  // namespace dynlm::ot
