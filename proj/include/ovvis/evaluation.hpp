#pragma once
// Video-level evaluation: spatio-temporal mask IoU, 101-point interpolated
// average precision with greedy confidence-ordered matching over IoU
// thresholds 0.50:0.05:0.95, base/novel mAP breakdown, and tracking
// consistency metrics.

#include <json.hpp>
#include <string>
#include <vector>

#include "ovvis/synthetic_world.hpp"
#include "ovvis/tracker.hpp"

namespace ovvis {

// Per-frame binary masks indexed by global frame; empty vector = no mask.
using FrameMasks = std::vector<std::vector<uint8_t>>;

struct TrackPrediction {
  int video_index = 0;
  int track_id = 0;
  int category = -1;
  double confidence = 0.0;
  FrameMasks frames;
};

struct TrackGroundTruth {
  int video_index = 0;
  int track_id = 0;
  int category = -1;
  FrameMasks frames;
};

// sum_t |intersection| / sum_t |union|; 0 when the union is empty. Missing
// frames count as empty masks.
double st_iou(const FrameMasks& a, const FrameMasks& b);

// The exact threshold grid: (50 + 5i)/100 for i in 0..9.
std::vector<double> iou_thresholds();

// Greedy matching in descending confidence at one threshold; 101-point
// interpolated area under the precision-recall curve. preds/gts must already
// be restricted to a single category.
double ap_at_threshold(std::vector<TrackPrediction> preds,
                       const std::vector<TrackGroundTruth>& gts,
                       double iou_threshold);

// Mean of ap_at_threshold over the grid.
double category_ap(const std::vector<TrackPrediction>& preds,
                   const std::vector<TrackGroundTruth>& gts);

struct IdMetrics {
  int id_switches = 0;
  double id_consistency = 0.0;  // fraction of gt tracks kept by one pred id
};

// Frame-level matching by mask IoU > 0.5. A switch is a frame where a gt
// track's matched pred id differs from its previously matched id; a gt track
// is consistent when it is matched at least once and always by the same id.
IdMetrics id_metrics(const std::vector<TrackPrediction>& preds,
                     const std::vector<TrackGroundTruth>& gts);

struct EvalReport {
  double map = 0.0;
  double map_base = 0.0;
  double map_novel = 0.0;
  std::vector<double> per_category_ap;  // NaN-free; -1 marks "no ground truth"
  int id_switches = 0;
  double id_consistency = 0.0;
  nlohmann::json config_echo;
};

EvalReport evaluate(const std::vector<TrackPrediction>& preds,
                    const std::vector<TrackGroundTruth>& gts, size_t num_categories,
                    const std::vector<bool>& novel_flags,
                    nlohmann::json config_echo = nlohmann::json::object());

nlohmann::json eval_report_to_json(const EvalReport& r,
                                   const std::vector<std::string>& category_names,
                                   const std::vector<bool>& novel_flags);
std::string eval_report_csv(const EvalReport& r,
                            const std::vector<std::string>& category_names,
                            const std::vector<bool>& novel_flags);

// Adapters from the tracker/world types.
std::vector<TrackPrediction> predictions_from_result(const VideoResult& r);
std::vector<TrackGroundTruth> video_ground_truth(const SyntheticVideo& video,
                                                 size_t stride);

}  // namespace ovvis
