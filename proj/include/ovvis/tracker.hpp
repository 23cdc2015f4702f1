#pragma once
// Online / offline / semi-online inference. A video is cut into
// non-overlapping clips, each clip runs through the model, and identities
// are stitched clip-to-clip with the Hungarian algorithm on (1 - cosine
// similarity) between consecutive clip queries. Online is semi-online with
// clip length 1; offline is a single whole-video clip (no association).

#include <functional>
#include <json.hpp>

#include "ovvis/assignment.hpp"
#include "ovvis/tensor.hpp"

namespace ovvis {

enum class InferenceScheme { kOnline, kOffline, kSemiOnline };
InferenceScheme scheme_from_string(const std::string& s);
std::string to_string(InferenceScheme s);

struct TrackerConfig {
  double theta_keep = 0.3;  // objectness filter before association
  double theta_new = 0.2;   // minimum similarity to extend a track
  int patience = 1;         // unmatched clips an active track survives
  double ema = 0.0;         // 0 overwrites the track query with the latest
};

// Pairwise cosine similarity between query rows; entries in [-1, 1].
Tensor similarity(const Tensor& q_a, const Tensor& q_b, double eps = 1e-12);

struct TrackClipRecord {
  int clip_index = 0;
  std::vector<int> frame_indices;
  std::vector<double> cls_scores;  // K
  double ins_score = 0.0;
  Tensor masks;  // Tc x h x w, soft
};

struct Track {
  int track_id = 0;
  Tensor query;  // C, latest (or EMA) query for this identity
  std::vector<TrackClipRecord> records;
  int misses = 0;
  bool active = true;
  int category = -1;       // filled on finalize
  double confidence = 0.0; // filled on finalize
};

struct CurrentQuery {
  Tensor query;  // C
  TrackClipRecord record;
};

// Hungarian on 1 - similarity between active tracks and kept queries.
// Matches below theta_new count as unmatched on both sides; unmatched
// queries spawn tracks, unmatched tracks accumulate misses and close after
// patience clips.
void associate(std::vector<Track>& tracks, std::vector<CurrentQuery> current,
               const TrackerConfig& cfg, int& next_track_id);

struct ClipModelOutput {
  Tensor queries;  // N x C
  Tensor s_cls;    // N x K
  Tensor s_ins;    // N x 1
  Tensor masks;    // N x Tc x h x w
};

struct TrackerInput {
  size_t num_frames = 0;
  std::function<ClipModelOutput(const std::vector<int>& frame_indices, int clip_index)>
      forward;
};

struct VideoResult {
  int video_index = 0;
  size_t num_frames = 0;
  size_t mask_height = 0;
  size_t mask_width = 0;
  std::vector<Track> tracks;

  // Binary mask (h*w, 0/1) of one track at one frame; empty when the track
  // does not cover the frame.
  std::vector<uint8_t> track_mask_at(size_t track_pos, int frame_idx) const;
};

VideoResult run_inference(const TrackerInput& input, InferenceScheme scheme,
                          size_t clip_len, const TrackerConfig& cfg,
                          int video_index = 0);

// Row-major run-length encoding of a binary mask, alternating zero/one run
// lengths starting with zeros.
std::vector<int> rle_encode(const std::vector<uint8_t>& mask);
std::vector<uint8_t> rle_decode(const std::vector<int>& runs, size_t numel);

nlohmann::json video_result_to_json(const VideoResult& r);
VideoResult video_result_from_json(const nlohmann::json& j);

}  // namespace ovvis
