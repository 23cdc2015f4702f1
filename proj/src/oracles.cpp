#include "ovvis/oracles.hpp"

#include <algorithm>

namespace ovvis {

namespace {

void enumerate(const Tensor& costs, size_t p, size_t matched, size_t need,
               double running, std::vector<char>& used,
               std::vector<std::pair<int, int>>& current,
               BruteForceAssignment& best, bool& found) {
  const size_t P = costs.dim(0), G = costs.dim(1);
  if (matched == need) {
    if (!found || running < best.min_cost) {
      found = true;
      best.min_cost = running;
      best.pairs = current;
    }
    return;
  }
  if (p >= P) return;
  // Matching this prediction.
  for (size_t g = 0; g < G; ++g) {
    if (used[g]) continue;
    used[g] = 1;
    current.emplace_back(static_cast<int>(p), static_cast<int>(g));
    enumerate(costs, p + 1, matched + 1, need, running + costs.at(p, g), used,
              current, best, found);
    current.pop_back();
    used[g] = 0;
  }
  // Skipping it, when enough predictions remain to finish.
  if (P - p - 1 >= need - matched) {
    enumerate(costs, p + 1, matched, need, running, used, current, best, found);
  }
}

}  // namespace

BruteForceAssignment brute_force_min_assignment(const Tensor& costs) {
  if (costs.rank() != 2) {
    throw ShapeError("brute force: cost matrix must be rank 2");
  }
  const size_t P = costs.dim(0), G = costs.dim(1);
  BruteForceAssignment best;
  const size_t need = std::min(P, G);
  if (need == 0) return best;
  std::vector<char> used(G, 0);
  std::vector<std::pair<int, int>> current;
  bool found = false;
  enumerate(costs, 0, 0, need, 0.0, used, current, best, found);
  return best;
}

}  // namespace ovvis
