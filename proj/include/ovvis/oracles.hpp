#pragma once
// Independent diagnostic oracles used by selftest, the acceptance suite and
// unit tests. Deliberately share no code with the implementations they
// check.

#include "ovvis/tensor.hpp"

#include <utility>
#include <vector>

namespace ovvis {

struct BruteForceAssignment {
  double min_cost = 0.0;
  std::vector<std::pair<int, int>> pairs;
};

// Exhaustive minimum over every injection of size min(P, G). Totals are
// accumulated left-to-right in prediction order.
BruteForceAssignment brute_force_min_assignment(const Tensor& costs);

}  // namespace ovvis
