#include "ovvis/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace ovvis {

namespace {

size_t mask_area(const std::vector<uint8_t>& m) {
  size_t a = 0;
  for (uint8_t v : m) a += v;
  return a;
}

double frame_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return 0.0;
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double st_iou(const FrameMasks& a, const FrameMasks& b) {
  const size_t frames = std::max(a.size(), b.size());
  size_t inter = 0, uni = 0;
  for (size_t f = 0; f < frames; ++f) {
    const std::vector<uint8_t>* ma = f < a.size() && !a[f].empty() ? &a[f] : nullptr;
    const std::vector<uint8_t>* mb = f < b.size() && !b[f].empty() ? &b[f] : nullptr;
    if (!ma && !mb) continue;
    if (ma && !mb) {
      uni += mask_area(*ma);
      continue;
    }
    if (!ma && mb) {
      uni += mask_area(*mb);
      continue;
    }
    for (size_t i = 0; i < ma->size(); ++i) {
      inter += ((*ma)[i] && (*mb)[i]) ? 1 : 0;
      uni += ((*ma)[i] || (*mb)[i]) ? 1 : 0;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return out;
}

double ap_at_threshold(std::vector<TrackPrediction> preds,
                       const std::vector<TrackGroundTruth>& gts,
                       double iou_threshold) {
  if (gts.empty()) return 0.0;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const TrackPrediction& a, const TrackPrediction& b) {
                     if (a.confidence != b.confidence) return a.confidence > b.confidence;
                     if (a.video_index != b.video_index) return a.video_index < b.video_index;
                     return a.track_id < b.track_id;
                   });
  std::vector<char> gt_used(gts.size(), 0);
  std::vector<char> is_tp;
  is_tp.reserve(preds.size());
  for (const auto& p : preds) {
    int best = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].video_index != p.video_index) continue;
      const double iou = st_iou(p.frames, gts[g].frames);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      gt_used[static_cast<size_t>(best)] = 1;
      is_tp.push_back(1);
    } else {
      is_tp.push_back(0);
    }
  }
  // Precision/recall along the ranking, then 101-point interpolation.
  const double total_gt = static_cast<double>(gts.size());
  std::vector<double> precision, recall;
  size_t tp = 0;
  for (size_t i = 0; i < is_tp.size(); ++i) {
    tp += is_tp[i] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = static_cast<double>(r) / 100.0;
    double best = 0.0;
    for (size_t i = 0; i < precision.size(); ++i) {
      if (recall[i] >= level) best = std::max(best, precision[i]);
    }
    sum += best;
  }
  return sum / 101.0;
}

double category_ap(const std::vector<TrackPrediction>& preds,
                   const std::vector<TrackGroundTruth>& gts) {
  double sum = 0.0;
  for (double thr : iou_thresholds()) sum += ap_at_threshold(preds, gts, thr);
  return sum / 10.0;
}

IdMetrics id_metrics(const std::vector<TrackPrediction>& preds,
                     const std::vector<TrackGroundTruth>& gts) {
  IdMetrics m;
  size_t consistent = 0;
  for (const auto& gt : gts) {
    int prev_id = -1;
    bool any_match = false;
    bool single_id = true;
    int first_id = -1;
    for (size_t f = 0; f < gt.frames.size(); ++f) {
      if (gt.frames[f].empty() || mask_area(gt.frames[f]) == 0) continue;
      int match_id = -1;
      for (const auto& p : preds) {
        if (p.video_index != gt.video_index) continue;
        if (f >= p.frames.size() || p.frames[f].empty()) continue;
        if (frame_iou(p.frames[f], gt.frames[f]) > 0.5) {
          match_id = p.track_id;
          break;  // IoU > 0.5 against disjoint gt masks is unique
        }
      }
      if (match_id < 0) continue;
      if (any_match && match_id != prev_id) ++m.id_switches;
      if (!any_match) first_id = match_id;
      if (match_id != first_id) single_id = false;
      prev_id = match_id;
      any_match = true;
    }
    if (any_match && single_id) ++consistent;
  }
  m.id_consistency =
      gts.empty() ? 0.0 : static_cast<double>(consistent) / static_cast<double>(gts.size());
  return m;
}

EvalReport evaluate(const std::vector<TrackPrediction>& preds,
                    const std::vector<TrackGroundTruth>& gts, size_t num_categories,
                    const std::vector<bool>& novel_flags, nlohmann::json config_echo) {
  if (novel_flags.size() != num_categories) {
    throw ConfigError("evaluate: novel flags do not match category count");
  }
  EvalReport report;
  report.config_echo = std::move(config_echo);
  report.per_category_ap.assign(num_categories, -1.0);

  double sum_all = 0.0, sum_base = 0.0, sum_novel = 0.0;
  size_t n_all = 0, n_base = 0, n_novel = 0;
  for (size_t k = 0; k < num_categories; ++k) {
    std::vector<TrackPrediction> pk;
    std::vector<TrackGroundTruth> gk;
    for (const auto& p : preds)
      if (p.category == static_cast<int>(k)) pk.push_back(p);
    for (const auto& g : gts)
      if (g.category == static_cast<int>(k)) gk.push_back(g);
    if (gk.empty()) continue;  // categories without ground truth do not count
    const double ap = category_ap(pk, gk);
    report.per_category_ap[k] = ap;
    sum_all += ap;
    ++n_all;
    if (novel_flags[k]) {
      sum_novel += ap;
      ++n_novel;
    } else {
      sum_base += ap;
      ++n_base;
    }
  }
  report.map = n_all ? sum_all / static_cast<double>(n_all) : 0.0;
  report.map_base = n_base ? sum_base / static_cast<double>(n_base) : 0.0;
  report.map_novel = n_novel ? sum_novel / static_cast<double>(n_novel) : 0.0;

  IdMetrics ids = id_metrics(preds, gts);
  report.id_switches = ids.id_switches;
  report.id_consistency = ids.id_consistency;
  return report;
}

nlohmann::json eval_report_to_json(const EvalReport& r,
                                   const std::vector<std::string>& category_names,
                                   const std::vector<bool>& novel_flags) {
  nlohmann::json j;
  j["mAP"] = r.map;
  j["mAP_b"] = r.map_base;
  j["mAP_n"] = r.map_novel;
  j["id_switches"] = r.id_switches;
  j["id_consistency"] = r.id_consistency;
  nlohmann::json per = nlohmann::json::array();
  for (size_t k = 0; k < r.per_category_ap.size(); ++k) {
    nlohmann::json e;
    e["category"] = k;
    e["name"] = k < category_names.size() ? category_names[k] : "";
    e["novel"] = k < novel_flags.size() ? static_cast<bool>(novel_flags[k]) : false;
    e["has_ground_truth"] = r.per_category_ap[k] >= 0.0;
    e["ap"] = r.per_category_ap[k] >= 0.0 ? r.per_category_ap[k] : 0.0;
    per.push_back(e);
  }
  j["per_category_ap"] = per;
  j["config"] = r.config_echo;
  return j;
}

std::string eval_report_csv(const EvalReport& r,
                            const std::vector<std::string>& category_names,
                            const std::vector<bool>& novel_flags) {
  std::ostringstream os;
  os << "category,name,split,has_ground_truth,ap\n";
  os.precision(17);
  for (size_t k = 0; k < r.per_category_ap.size(); ++k) {
    const bool has_gt = r.per_category_ap[k] >= 0.0;
    os << k << "," << (k < category_names.size() ? category_names[k] : "") << ","
       << (k < novel_flags.size() && novel_flags[k] ? "novel" : "base") << ","
       << (has_gt ? 1 : 0) << "," << (has_gt ? r.per_category_ap[k] : 0.0) << "\n";
  }
  return os.str();
}

std::vector<TrackPrediction> predictions_from_result(const VideoResult& r) {
  std::vector<TrackPrediction> out;
  for (size_t ti = 0; ti < r.tracks.size(); ++ti) {
    const Track& t = r.tracks[ti];
    TrackPrediction p;
    p.video_index = r.video_index;
    p.track_id = t.track_id;
    p.category = t.category;
    p.confidence = t.confidence;
    p.frames.assign(r.num_frames, {});
    for (const auto& rec : t.records) {
      for (int f : rec.frame_indices) {
        p.frames[static_cast<size_t>(f)] = r.track_mask_at(ti, f);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<TrackGroundTruth> video_ground_truth(const SyntheticVideo& video,
                                                 size_t stride) {
  std::vector<TrackGroundTruth> out;
  const size_t T = video.num_frames();
  for (size_t i = 0; i < video.instance_masks.size(); ++i) {
    TrackGroundTruth g;
    g.video_index = video.index;
    g.track_id = video.track_ids[i];
    g.category = video.class_ids[i];
    Tensor small = downsample_mask(video.instance_masks[i], stride);
    const size_t per = small.dim(1) * small.dim(2);
    g.frames.assign(T, {});
    for (size_t t = 0; t < T; ++t) {
      std::vector<uint8_t> mask(per, 0);
      size_t area = 0;
      for (size_t p = 0; p < per; ++p) {
        mask[p] = small.at(t * per + p) != 0.0 ? 1 : 0;
        area += mask[p];
      }
      if (area > 0) g.frames[t] = std::move(mask);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace ovvis
