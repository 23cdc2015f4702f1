#include "ovvis/tracker.hpp"

#include <algorithm>
#include <cmath>

#include "ovvis/heads.hpp"

namespace ovvis {

InferenceScheme scheme_from_string(const std::string& s) {
  if (s == "online") return InferenceScheme::kOnline;
  if (s == "offline") return InferenceScheme::kOffline;
  if (s == "semi_online") return InferenceScheme::kSemiOnline;
  throw ConfigError("unknown inference scheme: " + s);
}

std::string to_string(InferenceScheme s) {
  switch (s) {
    case InferenceScheme::kOnline: return "online";
    case InferenceScheme::kOffline: return "offline";
    default: return "semi_online";
  }
}

Tensor similarity(const Tensor& q_a, const Tensor& q_b, double eps) {
  if (q_a.rank() != 2 || q_b.rank() != 2 || q_a.dim(1) != q_b.dim(1)) {
    throw ShapeError("similarity: incompatible shapes " + shape_str(q_a.shape()) +
                     " and " + shape_str(q_b.shape()));
  }
  const size_t n = q_a.dim(0), m = q_b.dim(0), c = q_a.dim(1);
  std::vector<double> na(n, 0.0), nb(m, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < c; ++j) s += q_a.at(i, j) * q_a.at(i, j);
    na[i] = std::sqrt(s);
  }
  for (size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < c; ++j) s += q_b.at(i, j) * q_b.at(i, j);
    nb[i] = std::sqrt(s);
  }
  Tensor out({n, m});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (size_t k = 0; k < c; ++k) dot += q_a.at(i, k) * q_b.at(j, k);
      out.at(i, j) = dot / std::max(na[i] * nb[j], eps);
    }
  return out;
}

void associate(std::vector<Track>& tracks, std::vector<CurrentQuery> current,
               const TrackerConfig& cfg, int& next_track_id) {
  std::vector<size_t> active;
  for (size_t i = 0; i < tracks.size(); ++i)
    if (tracks[i].active) active.push_back(i);

  std::vector<char> curr_matched(current.size(), 0);
  std::vector<char> track_matched(active.size(), 0);

  if (!active.empty() && !current.empty()) {
    const size_t c = current[0].query.numel();
    Tensor prev_q({active.size(), c});
    for (size_t i = 0; i < active.size(); ++i)
      for (size_t j = 0; j < c; ++j) prev_q.at(i, j) = tracks[active[i]].query.at(j);
    Tensor curr_q({current.size(), c});
    for (size_t i = 0; i < current.size(); ++i)
      for (size_t j = 0; j < c; ++j) curr_q.at(i, j) = current[i].query.at(j);

    Tensor sim = similarity(prev_q, curr_q);
    Tensor cost({active.size(), current.size()});
    for (size_t i = 0; i < cost.numel(); ++i) cost.at(i) = 1.0 - sim.at(i);
    Assignment match = hungarian(cost);
    for (const auto& [ti, ci] : match.pairs) {
      const size_t t = static_cast<size_t>(ti), q = static_cast<size_t>(ci);
      if (sim.at(t, q) < cfg.theta_new) continue;  // too dissimilar to extend
      Track& track = tracks[active[t]];
      if (cfg.ema > 0.0) {
        for (size_t j = 0; j < track.query.numel(); ++j) {
          track.query.at(j) =
              cfg.ema * track.query.at(j) + (1.0 - cfg.ema) * current[q].query.at(j);
        }
      } else {
        track.query = current[q].query;
      }
      track.records.push_back(std::move(current[q].record));
      track.misses = 0;
      track_matched[t] = 1;
      curr_matched[q] = 1;
    }
  }

  for (size_t t = 0; t < active.size(); ++t) {
    if (track_matched[t]) continue;
    Track& track = tracks[active[t]];
    if (++track.misses > cfg.patience) track.active = false;
  }
  for (size_t q = 0; q < current.size(); ++q) {
    if (curr_matched[q]) continue;
    Track fresh;
    fresh.track_id = next_track_id++;
    fresh.query = std::move(current[q].query);
    fresh.records.push_back(std::move(current[q].record));
    tracks.push_back(std::move(fresh));
  }
}

namespace {

void finalize_track(Track& track) {
  // Confidence-weighted vote over clips; ties go to the smaller class id.
  if (track.records.empty()) return;
  const size_t K = track.records[0].cls_scores.size();
  std::vector<double> votes(K, 0.0);
  for (const auto& rec : track.records) {
    Detection det = detection_score(rec.cls_scores, rec.ins_score);
    if (det.category >= 0) votes[static_cast<size_t>(det.category)] += det.score;
  }
  size_t best = 0;
  for (size_t k = 1; k < K; ++k)
    if (votes[k] > votes[best]) best = k;
  track.category = static_cast<int>(best);
  double conf = 0.0;
  for (const auto& rec : track.records) conf += rec.ins_score * rec.cls_scores[best];
  track.confidence = conf / static_cast<double>(track.records.size());
}

}  // namespace

VideoResult run_inference(const TrackerInput& input, InferenceScheme scheme,
                          size_t clip_len, const TrackerConfig& cfg,
                          int video_index) {
  if (input.num_frames == 0) throw ConfigError("run_inference: empty video");
  // Scheme pins the clip length; semi-online uses the requested one.
  if (scheme == InferenceScheme::kOnline) clip_len = 1;
  if (scheme == InferenceScheme::kOffline) clip_len = input.num_frames;
  if (clip_len == 0) throw ConfigError("run_inference: clip length must be positive");

  VideoResult result;
  result.video_index = video_index;
  result.num_frames = input.num_frames;
  std::vector<Track> tracks;
  int next_id = 0;

  int clip_index = 0;
  for (size_t start = 0; start < input.num_frames; start += clip_len, ++clip_index) {
    const size_t end = std::min(start + clip_len, input.num_frames);
    std::vector<int> frame_indices;
    for (size_t f = start; f < end; ++f) frame_indices.push_back(static_cast<int>(f));
    ClipModelOutput out = input.forward(frame_indices, clip_index);

    const size_t N = out.queries.dim(0);
    const size_t K = out.s_cls.dim(1);
    const size_t Tc = out.masks.dim(1), h = out.masks.dim(2), w = out.masks.dim(3);
    result.mask_height = h;
    result.mask_width = w;

    std::vector<CurrentQuery> kept;
    for (size_t n = 0; n < N; ++n) {
      if (out.s_ins.at(n, 0) < cfg.theta_keep) continue;
      CurrentQuery cq;
      cq.query = Tensor({out.queries.dim(1)});
      for (size_t j = 0; j < cq.query.numel(); ++j) cq.query.at(j) = out.queries.at(n, j);
      cq.record.clip_index = clip_index;
      cq.record.frame_indices = frame_indices;
      cq.record.cls_scores.resize(K);
      for (size_t k = 0; k < K; ++k) cq.record.cls_scores[k] = out.s_cls.at(n, k);
      cq.record.ins_score = out.s_ins.at(n, 0);
      cq.record.masks = Tensor({Tc, h, w});
      const size_t per = Tc * h * w;
      for (size_t i = 0; i < per; ++i) cq.record.masks.at(i) = out.masks.at(n * per + i);
      kept.push_back(std::move(cq));
    }
    associate(tracks, std::move(kept), cfg, next_id);
  }

  for (Track& t : tracks) finalize_track(t);
  result.tracks = std::move(tracks);
  return result;
}

std::vector<uint8_t> VideoResult::track_mask_at(size_t track_pos, int frame_idx) const {
  const Track& t = tracks.at(track_pos);
  for (const auto& rec : t.records) {
    for (size_t f = 0; f < rec.frame_indices.size(); ++f) {
      if (rec.frame_indices[f] != frame_idx) continue;
      std::vector<uint8_t> mask(mask_height * mask_width, 0);
      const size_t per = mask_height * mask_width;
      for (size_t i = 0; i < per; ++i) {
        mask[i] = rec.masks.at(f * per + i) > kMaskBinarizeThreshold ? 1 : 0;
      }
      return mask;
    }
  }
  return {};
}

std::vector<int> rle_encode(const std::vector<uint8_t>& mask) {
  std::vector<int> runs;
  uint8_t value = 0;  // starts with zeros
  int run = 0;
  for (uint8_t v : mask) {
    if (v == value) {
      ++run;
    } else {
      runs.push_back(run);
      value = v;
      run = 1;
    }
  }
  runs.push_back(run);
  return runs;
}

std::vector<uint8_t> rle_decode(const std::vector<int>& runs, size_t numel) {
  std::vector<uint8_t> mask;
  mask.reserve(numel);
  uint8_t value = 0;
  for (int run : runs) {
    if (run < 0) throw IoError("negative RLE run");
    for (int i = 0; i < run; ++i) mask.push_back(value);
    value = value ? 0 : 1;
  }
  if (mask.size() != numel) {
    throw IoError("RLE decodes to " + std::to_string(mask.size()) + " pixels, expected " +
                  std::to_string(numel));
  }
  return mask;
}

nlohmann::json video_result_to_json(const VideoResult& r) {
  nlohmann::json j;
  j["video_index"] = r.video_index;
  j["num_frames"] = r.num_frames;
  j["mask_height"] = r.mask_height;
  j["mask_width"] = r.mask_width;
  nlohmann::json tracks = nlohmann::json::array();
  for (size_t ti = 0; ti < r.tracks.size(); ++ti) {
    const Track& t = r.tracks[ti];
    nlohmann::json jt;
    jt["id"] = t.track_id;
    jt["category"] = t.category;
    jt["confidence"] = t.confidence;
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& rec : t.records) {
      for (int f : rec.frame_indices) {
        frames.push_back({{"frame_idx", f},
                          {"rle", rle_encode(r.track_mask_at(ti, f))}});
      }
    }
    jt["frames"] = frames;
    tracks.push_back(jt);
  }
  j["tracks"] = tracks;
  return j;
}

VideoResult video_result_from_json(const nlohmann::json& j) {
  VideoResult r;
  r.video_index = j.at("video_index").get<int>();
  r.num_frames = j.at("num_frames").get<size_t>();
  r.mask_height = j.at("mask_height").get<size_t>();
  r.mask_width = j.at("mask_width").get<size_t>();
  const size_t per = r.mask_height * r.mask_width;
  for (const auto& jt : j.at("tracks")) {
    Track t;
    t.track_id = jt.at("id").get<int>();
    t.category = jt.at("category").get<int>();
    t.confidence = jt.at("confidence").get<double>();
    // Frames reload as per-frame records with already-binarized masks.
    for (const auto& jf : jt.at("frames")) {
      TrackClipRecord rec;
      rec.frame_indices = {jf.at("frame_idx").get<int>()};
      rec.ins_score = t.confidence;
      rec.masks = Tensor({1, r.mask_height, r.mask_width});
      std::vector<uint8_t> mask = rle_decode(jf.at("rle").get<std::vector<int>>(), per);
      for (size_t i = 0; i < per; ++i) rec.masks.at(i) = mask[i] ? 1.0 : 0.0;
      t.records.push_back(std::move(rec));
    }
    r.tracks.push_back(std::move(t));
  }
  return r;
}

}  // namespace ovvis
