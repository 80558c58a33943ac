#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace dynlm::ot {

// Exact minimum-cost transport between discrete distributions.
// supply and demand must each sum to the same total (within 1e-9; they are
// renormalized internally). cost(i, j) >= 0 is evaluated lazily; instances
// up to ~16M arcs get a dense cache.
//
// Transportation simplex: Vogel initialization, spanning-tree basis, block
// pricing with a Bland fallback after degenerate streaks. Deterministic:
// fixed scan orders, lexicographic tie-breaks.
struct TransportResult {
  double cost = 0.0;
  std::uint64_t pivots = 0;
};

TransportResult transport(const std::vector<double>& supply,
                          const std::vector<double>& demand,
                          const std::function<double(int, int)>& cost);

// Entropic approximation (log-domain Sinkhorn), for supports too large for
// the exact solver. Returns the transport cost of the regularized plan.
double sinkhorn(const std::vector<double>& supply, const std::vector<double>& demand,
                const std::function<double(int, int)>& cost, double epsilon,
                int max_iterations = 10000, double tolerance = 1e-9);

}  // namespace dynlm::ot
