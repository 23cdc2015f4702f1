#pragma once
// Optimal bipartite assignment and the matching loss. hungarian() returns
// the minimum-total-cost assignment of size min(P, G); among equal-cost
// optima it returns the lexicographically smallest pair list. Totals are
// always left-to-right sums of the matched entries in prediction order, so
// they compare exactly against enumeration oracles.

#include <utility>
#include <vector>

#include "ovvis/tensor.hpp"

namespace ovvis {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (pred, gt), sorted by pred
  double total_cost = 0.0;

  bool matched_pred(int p) const {
    for (const auto& [pp, gg] : pairs)
      if (pp == p) return true;
    return false;
  }
};

struct LossWeights {
  double ins = 2.0;
  double cls = 2.0;
  double mask = 5.0;
};

struct GroundTruthInstance {
  int class_id = 0;
  Tensor masks;  // T x h x w, values in {0, 1}
  bool present = true;
};

struct GroundTruthClip {
  std::vector<GroundTruthInstance> instances;
  size_t num_categories = 0;

  void validate() const;
};

// costs: P x G, all entries finite (NaN/Inf raise NumericError).
Assignment hungarian(const Tensor& costs);

// cost[p][g] = w_ins*BCE(S_ins[p], 1) + w_cls*BCE(S_cls[p, class_g], 1)
//            + w_mask*(dice(M_p, M_g) + BCE(M_p, M_g)),
// computed on raw values without gradient tracking.
Tensor pairwise_cost(const Tensor& s_ins, const Tensor& s_cls, const Tensor& masks,
                     const GroundTruthClip& gt, const LossWeights& w);

// 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps) with eps = 1, over the
// flattened spatio-temporal pixels; differentiable in pred.
Tensor dice_loss(Tape& t, const Tensor& pred, const Tensor& gt);

struct TrainingLoss {
  Tensor loss;  // scalar, differentiable
  Assignment assignment;
  Tensor costs;  // the P x G matrix the assignment was computed from
};

// The differentiable loss for a given (fixed) pair list: matched predictions
// get all three weighted terms, the rest get the no-object objectness term;
// mean over predictions.
Tensor matched_loss(Tape& t, const Tensor& s_ins, const Tensor& s_cls,
                    const Tensor& masks, const GroundTruthClip& gt,
                    const LossWeights& w,
                    const std::vector<std::pair<int, int>>& pairs,
                    bool all_class_bce = false);

// Matched pairs contribute all three weighted terms; unmatched predictions
// contribute w_ins*BCE(S_ins, 0). Result is the mean over predictions. The
// assignment is computed from pairwise_cost and held fixed during backward.
TrainingLoss training_loss(Tape& t, const Tensor& s_ins, const Tensor& s_cls,
                           const Tensor& masks, const GroundTruthClip& gt,
                           const LossWeights& w, bool all_class_bce = false);

}  // namespace ovvis
