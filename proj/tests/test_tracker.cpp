#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovvis/synthetic_world.hpp"
#include "ovvis/tracker.hpp"

using namespace ovvis;

namespace {

Tensor rows(std::vector<std::vector<double>> data) {
  Tensor t({data.size(), data[0].size()});
  for (size_t i = 0; i < data.size(); ++i)
    for (size_t j = 0; j < data[i].size(); ++j) t.at(i, j) = data[i][j];
  return t;
}

// Oracle model: emits one query per ground-truth instance (constant identity
// vector across clips), perfect scores and the downsampled gt masks, plus a
// couple of low-objectness padding queries.
TrackerInput oracle_model(const SyntheticVideo& video, size_t num_categories,
                          size_t stride) {
  TrackerInput input;
  input.num_frames = video.num_frames();
  input.forward = [&video, num_categories, stride](const std::vector<int>& frames,
                                                   int) {
    const size_t I = video.instance_masks.size();
    const size_t N = I + 2;
    const size_t C = 8;
    const size_t h = video.frames.dim(2) / stride, w = video.frames.dim(3) / stride;
    ClipModelOutput out;
    out.queries = Tensor({N, C});
    out.s_cls = Tensor({N, num_categories});
    out.s_ins = Tensor({N, 1});
    out.masks = Tensor::full({N, frames.size(), h, w}, 0.1);
    for (size_t i = 0; i < I; ++i) {
      out.queries.at(i, i % C) = 1.0;  // stable identity direction
      out.s_cls.at(i, static_cast<size_t>(video.class_ids[i])) = 1.0;
      out.s_ins.at(i, 0) = 0.99;
      Tensor sub({frames.size(), video.frames.dim(2), video.frames.dim(3)});
      const size_t full = video.frames.dim(2) * video.frames.dim(3);
      for (size_t f = 0; f < frames.size(); ++f) {
        const double* src =
            video.instance_masks[i].data() + static_cast<size_t>(frames[f]) * full;
        std::copy(src, src + full, sub.data() + f * full);
      }
      Tensor small = downsample_mask(sub, stride);
      const size_t per = frames.size() * h * w;
      for (size_t p = 0; p < per; ++p)
        out.masks.at(i * per + p) = small.at(p) != 0.0 ? 0.9 : 0.1;
    }
    for (size_t n = I; n < N; ++n) {
      out.queries.at(n, 0) = -1.0;
      out.s_ins.at(n, 0) = 0.01;
      for (size_t k = 0; k < num_categories; ++k)
        out.s_cls.at(n, k) = 1.0 / static_cast<double>(num_categories);
    }
    return out;
  };
  return input;
}

}  // namespace

TEST_CASE("similarity trivial cases") {
  Tensor q = rows({{1, 0, 0}, {0, 2, 0}});
  Tensor s = similarity(q, q);
  CHECK(s.at(0, 0) == doctest::Approx(1.0));
  CHECK(s.at(1, 1) == doctest::Approx(1.0));
  CHECK(s.at(0, 1) == doctest::Approx(0.0));

  Tensor neg = rows({{-1, 0, 0}, {0, -2, 0}});
  Tensor sn = similarity(q, neg);
  CHECK(sn.at(0, 0) == doctest::Approx(-1.0));
  CHECK(sn.at(1, 1) == doctest::Approx(-1.0));
}

TEST_CASE("associate: spawn, identity match, diagonal case, patience") {
  TrackerConfig cfg;
  cfg.theta_new = 0.5;
  cfg.patience = 1;
  int next_id = 0;
  std::vector<Track> tracks;

  auto make_current = [](std::vector<std::vector<double>> queries) {
    std::vector<CurrentQuery> cur;
    for (auto& q : queries) {
      CurrentQuery cq;
      cq.query = Tensor({q.size()}, std::vector<double>(q.begin(), q.end()));
      cq.record.cls_scores = {1.0};
      cq.record.ins_score = 0.9;
      cq.record.masks = Tensor({1, 1, 1});
      cur.push_back(std::move(cq));
    }
    return cur;
  };

  // First clip: every kept query spawns a track, ids in query order.
  associate(tracks, make_current({{1, 0}, {0, 1}}), cfg, next_id);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].track_id == 0);
  CHECK(tracks[1].track_id == 1);

  // Identical queries: identity matching, no new tracks.
  associate(tracks, make_current({{1, 0}, {0, 1}}), cfg, next_id);
  CHECK(tracks.size() == 2);
  CHECK(tracks[0].records.size() == 2);
  CHECK(tracks[1].records.size() == 2);

  // Similarity [[0.9, 0.1], [0.1, 0.9]]-style: diagonal extension.
  associate(tracks, make_current({{0.9, std::sqrt(1 - 0.81)}, {std::sqrt(1 - 0.81), 0.9}}),
            cfg, next_id);
  CHECK(tracks.size() == 2);
  CHECK(tracks[0].records.size() == 3);

  // Dissimilar queries spawn new tracks; the old ones stay active for one
  // missed clip (patience 1), then close on the second miss.
  associate(tracks, make_current({{-1, 0}, {0, -1}}), cfg, next_id);
  CHECK(tracks.size() == 4);
  CHECK(tracks[0].active);
  CHECK(tracks[0].misses == 1);
  associate(tracks, make_current({{-1, 0}, {0, -1}}), cfg, next_id);
  CHECK_FALSE(tracks[0].active);
  CHECK_FALSE(tracks[1].active);
  CHECK(tracks.size() == 4);
}

TEST_CASE("associate never assigns two current queries to one track") {
  TrackerConfig cfg;
  cfg.theta_new = -1.0;  // accept everything
  int next_id = 0;
  std::vector<Track> tracks;
  std::vector<CurrentQuery> first;
  for (int i = 0; i < 3; ++i) {
    CurrentQuery cq;
    cq.query = Tensor({2}, {1.0, static_cast<double>(i)});
    cq.record.cls_scores = {1.0};
    cq.record.masks = Tensor({1, 1, 1});
    first.push_back(std::move(cq));
  }
  associate(tracks, std::move(first), cfg, next_id);
  std::vector<CurrentQuery> second;
  for (int i = 0; i < 3; ++i) {
    CurrentQuery cq;
    cq.query = Tensor({2}, {1.0, 0.9});  // all similar to track 0
    cq.record.cls_scores = {1.0};
    cq.record.masks = Tensor({1, 1, 1});
    second.push_back(std::move(cq));
  }
  associate(tracks, std::move(second), cfg, next_id);
  size_t extended = 0;
  for (const auto& t : tracks) extended += t.records.size() > 1 ? 1 : 0;
  CHECK(extended == 3);  // each track got exactly one of the three
}

TEST_CASE("offline is a single clip; online equals semi_online(1) bit for bit") {
  WorldConfig wcfg;
  wcfg.categories = 4;
  wcfg.embed_dim = 8;
  wcfg.height = 16;
  wcfg.width = 16;
  wcfg.frames_per_video = 10;
  wcfg.instances_min = 2;
  wcfg.instances_max = 2;
  wcfg.videos_train = 1;
  wcfg.seed = 11;
  Dataset ds = generate(wcfg, Split::kTrain);
  const auto& video = ds.videos[0];
  TrackerConfig tcfg;

  TrackerInput input = oracle_model(video, wcfg.categories, 4);
  VideoResult offline = run_inference(input, InferenceScheme::kOffline, 99, tcfg);
  CHECK(offline.tracks.size() == 2);
  for (const auto& t : offline.tracks) CHECK(t.records.size() == 1);

  VideoResult online = run_inference(input, InferenceScheme::kOnline, 7, tcfg);
  VideoResult semi1 = run_inference(input, InferenceScheme::kSemiOnline, 1, tcfg);
  CHECK(video_result_to_json(online).dump() == video_result_to_json(semi1).dump());
}

TEST_CASE("two persistent instances track cleanly at clip length 5") {
  WorldConfig wcfg;
  wcfg.categories = 4;
  wcfg.embed_dim = 8;
  wcfg.height = 16;
  wcfg.width = 16;
  wcfg.frames_per_video = 10;
  wcfg.instances_min = 2;
  wcfg.instances_max = 2;
  wcfg.videos_train = 1;
  wcfg.noise_sigma = 0.0;
  wcfg.seed = 21;
  Dataset ds = generate(wcfg, Split::kTrain);
  const auto& video = ds.videos[0];

  TrackerInput input = oracle_model(video, wcfg.categories, 4);
  VideoResult r = run_inference(input, InferenceScheme::kSemiOnline, 5, TrackerConfig{});
  CHECK(r.tracks.size() == 2);
  for (const auto& t : r.tracks) {
    CHECK(t.records.size() == 2);  // both clips joined into one identity
    CHECK(t.category == video.class_ids[t.track_id]);
    CHECK(t.confidence > 0.9);
  }
}

TEST_CASE("per-frame mask area is preserved through stitching") {
  WorldConfig wcfg;
  wcfg.categories = 3;
  wcfg.embed_dim = 8;
  wcfg.height = 16;
  wcfg.width = 16;
  wcfg.frames_per_video = 8;
  wcfg.instances_min = 2;
  wcfg.instances_max = 2;
  wcfg.videos_train = 1;
  wcfg.seed = 31;
  Dataset ds = generate(wcfg, Split::kTrain);
  const auto& video = ds.videos[0];
  TrackerInput input = oracle_model(video, wcfg.categories, 4);
  VideoResult r = run_inference(input, InferenceScheme::kSemiOnline, 4, TrackerConfig{});

  // Expected: the binarized oracle masks summed over kept queries.
  for (int f = 0; f < 8; ++f) {
    size_t expect = 0;
    for (size_t i = 0; i < video.instance_masks.size(); ++i) {
      Tensor sub({1, 16, 16});
      std::copy(video.instance_masks[i].data() + static_cast<size_t>(f) * 256,
                video.instance_masks[i].data() + static_cast<size_t>(f + 1) * 256,
                sub.data());
      Tensor small = downsample_mask(sub, 4);
      for (size_t p = 0; p < small.numel(); ++p) expect += small.at(p) != 0.0 ? 1 : 0;
    }
    size_t got = 0;
    for (size_t ti = 0; ti < r.tracks.size(); ++ti) {
      for (uint8_t v : r.track_mask_at(ti, f)) got += v;
    }
    CHECK(got == expect);
  }
}

TEST_CASE("RLE round-trips and starts with the zero run") {
  std::vector<uint8_t> mask = {0, 0, 1, 1, 1, 0, 1, 0, 0, 0};
  std::vector<int> runs = rle_encode(mask);
  CHECK(runs == std::vector<int>{2, 3, 1, 1, 3});
  CHECK(rle_decode(runs, mask.size()) == mask);

  std::vector<uint8_t> ones = {1, 1, 1};
  CHECK(rle_encode(ones) == std::vector<int>{0, 3});
  CHECK(rle_decode({0, 3}, 3) == ones);
  CHECK_THROWS_AS(rle_decode({2, 2}, 3), IoError);
}

TEST_CASE("video result JSON round-trips the masks") {
  WorldConfig wcfg;
  wcfg.categories = 3;
  wcfg.embed_dim = 8;
  wcfg.height = 16;
  wcfg.width = 16;
  wcfg.frames_per_video = 6;
  wcfg.instances_min = 1;
  wcfg.instances_max = 2;
  wcfg.videos_train = 1;
  wcfg.seed = 41;
  Dataset ds = generate(wcfg, Split::kTrain);
  TrackerInput input = oracle_model(ds.videos[0], wcfg.categories, 4);
  VideoResult r = run_inference(input, InferenceScheme::kSemiOnline, 3, TrackerConfig{});
  nlohmann::json j = video_result_to_json(r);
  VideoResult back = video_result_from_json(j);
  CHECK(back.tracks.size() == r.tracks.size());
  for (size_t ti = 0; ti < r.tracks.size(); ++ti) {
    CHECK(back.tracks[ti].category == r.tracks[ti].category);
    for (int f = 0; f < 6; ++f) {
      CHECK(back.track_mask_at(ti, f) == r.track_mask_at(ti, f));
    }
  }
  CHECK(video_result_to_json(back).dump() == j.dump());

  CHECK_THROWS_AS(run_inference(TrackerInput{}, InferenceScheme::kOnline, 1, TrackerConfig{}),
                  ConfigError);
}
