#include "ovvis/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ovvis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kProbClamp = 1e-12;

// Shortest-augmenting-path solver on a dense square matrix; returns row->col.
std::vector<int> solve_square(const std::vector<double>& a, size_t n) {
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    p[0] = static_cast<int>(i);
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = 0;
      double delta = kInf;
      for (size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[static_cast<size_t>(i0 - 1) * n + (j - 1)] -
                           u[static_cast<size_t>(i0)] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = static_cast<int>(j);
        }
      }
      for (size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[static_cast<size_t>(p[j])] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[static_cast<size_t>(p[j]) - 1] = static_cast<int>(j) - 1;
  }
  return row_to_col;
}

// Optimal completion over index subsets; pairs come back sorted by pred.
std::vector<std::pair<int, int>> best_pairs(const Tensor& costs,
                                            const std::vector<int>& preds,
                                            const std::vector<int>& gts) {
  const size_t np = preds.size(), ng = gts.size();
  if (np == 0 || ng == 0) return {};
  const size_t n = std::max(np, ng);
  std::vector<double> sq(n * n, 0.0);
  for (size_t i = 0; i < np; ++i)
    for (size_t j = 0; j < ng; ++j)
      sq[i * n + j] = costs.at(static_cast<size_t>(preds[i]), static_cast<size_t>(gts[j]));
  std::vector<int> row_to_col = solve_square(sq, n);
  std::vector<std::pair<int, int>> out;
  out.reserve(std::min(np, ng));
  for (size_t i = 0; i < np; ++i) {
    const int c = row_to_col[i];
    if (c >= 0 && c < static_cast<int>(ng)) {
      out.emplace_back(preds[i], gts[static_cast<size_t>(c)]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Left-to-right total in prediction order; the one summation order used for
// every cost comparison in this module.
double fold_cost(const Tensor& costs, double acc,
                 const std::vector<std::pair<int, int>>& pairs) {
  for (const auto& [p, g] : pairs)
    acc += costs.at(static_cast<size_t>(p), static_cast<size_t>(g));
  return acc;
}

double bce_value(double p, double target) {
  p = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

double bce_mean_value(const double* pred, const double* gt, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += bce_value(pred[i], gt[i]);
  return acc / static_cast<double>(n);
}

double dice_value(const double* pred, const double* gt, size_t n) {
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (size_t i = 0; i < n; ++i) {
    inter += pred[i] * gt[i];
    sp += pred[i];
    sg += gt[i];
  }
  return 1.0 - (2.0 * inter + 1.0) / (sp + sg + 1.0);
}

}  // namespace

void GroundTruthClip::validate() const {
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (inst.class_id < 0 || static_cast<size_t>(inst.class_id) >= num_categories) {
      throw ShapeError("ground truth instance " + std::to_string(i) +
                       ": class id " + std::to_string(inst.class_id) +
                       " out of range [0, " + std::to_string(num_categories) + ")");
    }
    if (inst.masks.rank() != 3) {
      throw ShapeError("ground truth masks must be T x h x w, got " +
                       shape_str(inst.masks.shape()));
    }
    for (size_t j = 0; j < inst.masks.numel(); ++j) {
      const double v = inst.masks.at(j);
      if (v != 0.0 && v != 1.0) {
        throw ShapeError("ground truth masks must be binary");
      }
    }
  }
}

Assignment hungarian(const Tensor& costs) {
  if (costs.rank() != 2) {
    throw ShapeError("hungarian: cost matrix must be rank 2, got " +
                     shape_str(costs.shape()));
  }
  const size_t P = costs.dim(0), G = costs.dim(1);
  for (size_t i = 0; i < costs.numel(); ++i) {
    if (!std::isfinite(costs.at(i))) {
      throw NumericError("hungarian: non-finite cost at flat index " + std::to_string(i));
    }
  }
  Assignment result;
  const size_t need = std::min(P, G);
  if (need == 0) return result;

  std::vector<int> all_preds(P), all_gts(G);
  for (size_t i = 0; i < P; ++i) all_preds[i] = static_cast<int>(i);
  for (size_t j = 0; j < G; ++j) all_gts[j] = static_cast<int>(j);
  double best = fold_cost(costs, 0.0, best_pairs(costs, all_preds, all_gts));

  // Greedy lexicographic refinement: fix the smallest (pred, gt) pair that
  // still admits an optimal completion, one prediction at a time.
  std::vector<int> rem_gts = all_gts;
  double acc = 0.0;
  for (int p = 0; p < static_cast<int>(P) && result.pairs.size() < need; ++p) {
    const size_t left = need - result.pairs.size();
    std::vector<int> preds_after;
    for (int q = p + 1; q < static_cast<int>(P); ++q) preds_after.push_back(q);

    int exact_g = -1;
    int fallback_g = -1;
    double fallback_val = kInf;
    for (int g : rem_gts) {
      std::vector<int> gts_minus;
      for (int x : rem_gts)
        if (x != g) gts_minus.push_back(x);
      if (std::min(preds_after.size(), gts_minus.size()) < left - 1) continue;
      double cand = acc + costs.at(static_cast<size_t>(p), static_cast<size_t>(g));
      cand = fold_cost(costs, cand, best_pairs(costs, preds_after, gts_minus));
      if (cand == best) {
        exact_g = g;
        break;
      }
      if (cand < fallback_val) {
        fallback_val = cand;
        fallback_g = g;
      }
    }

    bool skip = false;
    if (exact_g < 0) {
      // Skipping p is allowed only when enough predictions remain.
      const bool skip_feasible =
          std::min(preds_after.size(), rem_gts.size()) >= left;
      double skip_val = kInf;
      if (skip_feasible) {
        skip_val = fold_cost(costs, acc, best_pairs(costs, preds_after, rem_gts));
      }
      if (skip_val == best) {
        skip = true;
      } else if (fallback_g >= 0 && fallback_val <= skip_val) {
        // Float near-tie; stay feasible and keep comparisons consistent.
        exact_g = fallback_g;
        best = fallback_val;
      } else if (skip_feasible) {
        skip = true;
        best = skip_val;
      } else {
        throw std::logic_error("hungarian: refinement ran out of options");
      }
    }
    if (!skip) {
      result.pairs.emplace_back(p, exact_g);
      acc += costs.at(static_cast<size_t>(p), static_cast<size_t>(exact_g));
      rem_gts.erase(std::find(rem_gts.begin(), rem_gts.end(), exact_g));
    }
  }
  result.total_cost = fold_cost(costs, 0.0, result.pairs);
  return result;
}

Tensor pairwise_cost(const Tensor& s_ins, const Tensor& s_cls, const Tensor& masks,
                     const GroundTruthClip& gt, const LossWeights& w) {
  if (s_ins.rank() != 2 || s_ins.dim(1) != 1 || s_cls.rank() != 2 ||
      masks.rank() != 4 || s_ins.dim(0) != s_cls.dim(0) ||
      s_ins.dim(0) != masks.dim(0)) {
    throw ShapeError("pairwise_cost: inconsistent prediction shapes " +
                     shape_str(s_ins.shape()) + ", " + shape_str(s_cls.shape()) +
                     ", " + shape_str(masks.shape()));
  }
  const size_t P = s_ins.dim(0), K = s_cls.dim(1);
  const size_t G = gt.instances.size();
  const size_t mask_numel = masks.numel() / std::max<size_t>(P, 1);
  Tensor costs({P, G});
  for (size_t g = 0; g < G; ++g) {
    const auto& inst = gt.instances[g];
    if (inst.class_id < 0 || static_cast<size_t>(inst.class_id) >= K) {
      throw ShapeError("pairwise_cost: class id " + std::to_string(inst.class_id) +
                       " out of range [0, " + std::to_string(K) + ")");
    }
    if (inst.masks.numel() != mask_numel) {
      throw ShapeError("pairwise_cost: gt mask shape " + shape_str(inst.masks.shape()) +
                       " does not match prediction masks " + shape_str(masks.shape()));
    }
  }
  for (size_t p = 0; p < P; ++p) {
    const double* mp = masks.data() + p * mask_numel;
    for (size_t g = 0; g < G; ++g) {
      const auto& inst = gt.instances[g];
      const double* mg = inst.masks.data();
      double c = w.ins * bce_value(s_ins.at(p, 0), 1.0);
      c += w.cls * bce_value(s_cls.at(p, static_cast<size_t>(inst.class_id)), 1.0);
      c += w.mask * (dice_value(mp, mg, mask_numel) + bce_mean_value(mp, mg, mask_numel));
      costs.at(p, g) = c;
    }
  }
  return costs;
}

Tensor dice_loss(Tape& t, const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("dice_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  Tensor num = t.add_scalar(t.scale(t.reduce_sum(t.mul(pred, gt)), 2.0), 1.0);
  Tensor den = t.add_scalar(t.add(t.reduce_sum(pred), t.reduce_sum(gt)), 1.0);
  return t.add_scalar(t.scale(t.div(num, den), -1.0), 1.0);
}

Tensor matched_loss(Tape& t, const Tensor& s_ins, const Tensor& s_cls,
                    const Tensor& masks, const GroundTruthClip& gt,
                    const LossWeights& w,
                    const std::vector<std::pair<int, int>>& pairs,
                    bool all_class_bce) {
  const size_t P = s_ins.dim(0);
  const size_t K = s_cls.dim(1);

  std::vector<int> matched_gt(P, -1);
  for (const auto& [p, g] : pairs) matched_gt[static_cast<size_t>(p)] = g;

  const Tensor one = Tensor::scalar(1.0);
  const Tensor zero = Tensor::scalar(0.0);
  std::vector<Tensor> terms;
  terms.reserve(P);
  for (size_t p = 0; p < P; ++p) {
    Tensor ins_p = t.slice_index(s_ins, p);  // {1}
    if (matched_gt[p] < 0) {
      terms.push_back(t.scale(t.bce_mean(ins_p, zero), w.ins));
      continue;
    }
    const auto& inst = gt.instances[static_cast<size_t>(matched_gt[p])];
    Tensor term = t.scale(t.bce_mean(ins_p, one), w.ins);
    Tensor cls_row = t.slice_index(s_cls, p);  // {K}
    Tensor cls_term;
    if (all_class_bce) {
      Tensor onehot({K});
      onehot.at(static_cast<size_t>(inst.class_id)) = 1.0;
      cls_term = t.bce_mean(cls_row, onehot);
    } else {
      cls_term = t.bce_mean(t.slice_index(cls_row, static_cast<size_t>(inst.class_id)), one);
    }
    term = t.add(term, t.scale(cls_term, w.cls));
    Tensor mask_p = t.slice_index(masks, p);
    Tensor mask_term = t.add(dice_loss(t, mask_p, inst.masks), t.bce_mean(mask_p, inst.masks));
    term = t.add(term, t.scale(mask_term, w.mask));
    terms.push_back(term);
  }
  return t.scale(t.reduce_sum(t.concat(terms)), 1.0 / static_cast<double>(P));
}

TrainingLoss training_loss(Tape& t, const Tensor& s_ins, const Tensor& s_cls,
                           const Tensor& masks, const GroundTruthClip& gt,
                           const LossWeights& w, bool all_class_bce) {
  TrainingLoss out;
  out.costs = pairwise_cost(s_ins, s_cls, masks, gt, w);
  out.assignment = hungarian(out.costs);
  out.loss = matched_loss(t, s_ins, s_cls, masks, gt, w, out.assignment.pairs,
                          all_class_bce);
  return out;
}

}  // namespace ovvis
