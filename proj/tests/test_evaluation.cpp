#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovvis/evaluation.hpp"
#include "ovvis/fixtures.hpp"

using namespace ovvis;

namespace {

FrameMasks single(std::vector<uint8_t> mask) { return {std::move(mask)}; }

TrackPrediction pred(int video, int track, int category, double conf, FrameMasks f) {
  TrackPrediction p;
  p.video_index = video;
  p.track_id = track;
  p.category = category;
  p.confidence = conf;
  p.frames = std::move(f);
  return p;
}

TrackGroundTruth gt(int video, int track, int category, FrameMasks f) {
  TrackGroundTruth g;
  g.video_index = video;
  g.track_id = track;
  g.category = category;
  g.frames = std::move(f);
  return g;
}

}  // namespace

TEST_CASE("st_iou basics and symmetry") {
  FrameMasks a = single({1, 1, 0, 0});
  FrameMasks b = single({1, 0, 1, 0});
  CHECK(st_iou(a, a) == 1.0);
  CHECK(st_iou(a, single({0, 0, 1, 1})) == 0.0);
  CHECK(st_iou(a, b) == st_iou(b, a));
  CHECK(st_iou({}, {}) == 0.0);  // empty denominator
}

TEST_CASE("golden evaluator fixtures match exactly") {
  auto lines = run_eval_fixtures(std::string(OVVIS_FIXTURE_DIR) + "/eval_fixtures.json");
  CHECK(lines.size() == 10);
  for (const auto& l : lines) CHECK(l.find(": ok") != std::string::npos);
}

TEST_CASE("AP is invariant under monotone confidence transforms") {
  std::vector<TrackGroundTruth> gts = {
      gt(0, 0, 0, single({1, 1, 0, 0})),
      gt(0, 1, 0, single({0, 0, 1, 1})),
  };
  std::vector<TrackPrediction> preds = {
      pred(0, 0, 0, 0.9, single({1, 1, 0, 0})),
      pred(0, 1, 0, 0.4, single({0, 0, 1, 0})),
      pred(0, 2, 0, 0.2, single({0, 1, 1, 0})),
  };
  const double base = category_ap(preds, gts);
  std::vector<TrackPrediction> squashed = preds;
  for (auto& p : squashed) p.confidence = 1.0 / (1.0 + std::exp(-7.0 * p.confidence));
  CHECK(category_ap(squashed, gts) == base);
}

TEST_CASE("id metrics: perfect, churn, single switch") {
  auto box = [](int where) {
    std::vector<uint8_t> m(4, 0);
    m[static_cast<size_t>(where)] = 1;
    return m;
  };

  SUBCASE("perfect tracking") {
    FrameMasks track = {box(0), box(1), box(2)};
    IdMetrics m = id_metrics({pred(0, 7, 0, 0.9, track)}, {gt(0, 0, 0, track)});
    CHECK(m.id_switches == 0);
    CHECK(m.id_consistency == 1.0);
  }

  SUBCASE("new id every frame") {
    const int F = 4;
    FrameMasks gt_frames;
    std::vector<TrackPrediction> preds;
    for (int f = 0; f < F; ++f) {
      gt_frames.push_back(box(f % 4));
      FrameMasks pf(F);
      pf[static_cast<size_t>(f)] = box(f % 4);
      preds.push_back(pred(0, f, 0, 0.9, pf));
    }
    IdMetrics m = id_metrics(preds, {gt(0, 0, 0, gt_frames)});
    CHECK(m.id_switches == F - 1);
    CHECK(m.id_consistency == 0.0);
  }

  SUBCASE("one switch mid-video for one of two gts") {
    FrameMasks g0 = {box(0), box(0), box(0), box(0)};
    FrameMasks g1 = {box(3), box(3), box(3), box(3)};
    FrameMasks p_first(4), p_second(4), p_stable(4);
    p_first[0] = box(0);
    p_first[1] = box(0);
    p_second[2] = box(0);
    p_second[3] = box(0);
    for (int f = 0; f < 4; ++f) p_stable[static_cast<size_t>(f)] = box(3);
    IdMetrics m = id_metrics(
        {pred(0, 0, 0, 0.9, p_first), pred(0, 1, 0, 0.9, p_second),
         pred(0, 2, 0, 0.9, p_stable)},
        {gt(0, 0, 0, g0), gt(0, 1, 0, g1)});
    CHECK(m.id_switches == 1);
    CHECK(m.id_consistency == 0.5);
  }

  SUBCASE("never-matched tracks are not consistent") {
    IdMetrics m = id_metrics({}, {gt(0, 0, 0, {box(0)})});
    CHECK(m.id_switches == 0);
    CHECK(m.id_consistency == 0.0);
  }
}

TEST_CASE("evaluate: breakdown, reconstruction, report serialization") {
  // Category 0/1 base, 2 novel; category 3 has no ground truth.
  std::vector<bool> novel = {false, false, true, true};
  std::vector<TrackGroundTruth> gts = {
      gt(0, 0, 0, single({1, 1, 0, 0})),
      gt(0, 1, 1, single({0, 0, 1, 1})),
      gt(1, 0, 2, single({1, 0, 1, 0})),
  };
  std::vector<TrackPrediction> preds = {
      pred(0, 0, 0, 0.9, single({1, 1, 0, 0})),   // perfect
      pred(0, 1, 1, 0.8, single({1, 0, 0, 0})),   // wrong pixels
      pred(1, 0, 2, 0.7, single({1, 0, 1, 0})),   // perfect
  };
  EvalReport r = evaluate(preds, gts, 4, novel);
  CHECK(r.per_category_ap[0] == 1.0);
  CHECK(r.per_category_ap[2] == 1.0);
  CHECK(r.per_category_ap[3] == -1.0);  // no gt
  CHECK(r.map_novel == 1.0);
  // mAP equals the count-weighted reconstruction from the two splits.
  const double rebuilt = (2.0 * r.map_base + 1.0 * r.map_novel) / 3.0;
  CHECK(r.map == doctest::Approx(rebuilt).epsilon(1e-12));

  nlohmann::json j = eval_report_to_json(r, {"a", "b", "c", "d"}, novel);
  CHECK(j.contains("mAP"));
  CHECK(j.contains("mAP_b"));
  CHECK(j.contains("mAP_n"));
  CHECK(j.contains("id_switches"));
  CHECK(j.contains("id_consistency"));
  CHECK(j.at("per_category_ap").size() == 4);
  CHECK(j.at("per_category_ap")[3].at("has_ground_truth") == false);

  std::string csv = eval_report_csv(r, {"a", "b", "c", "d"}, novel);
  CHECK(csv.find("category,name,split,has_ground_truth,ap") == 0);
  CHECK(csv.find("2,c,novel,1,1") != std::string::npos);
}

TEST_CASE("perfect oracle predictions give mAP 1 and empty predictions give 0") {
  std::vector<bool> novel = {false, true};
  std::vector<TrackGroundTruth> gts = {
      gt(0, 0, 0, single({1, 1, 0, 0})),
      gt(0, 1, 1, single({0, 0, 1, 1})),
  };
  std::vector<TrackPrediction> perfect = {
      pred(0, 0, 0, 0.9, single({1, 1, 0, 0})),
      pred(0, 1, 1, 0.9, single({0, 0, 1, 1})),
  };
  EvalReport good = evaluate(perfect, gts, 2, novel);
  CHECK(good.map == 1.0);
  CHECK(good.map_base == 1.0);
  CHECK(good.map_novel == 1.0);

  EvalReport empty = evaluate({}, gts, 2, novel);
  CHECK(empty.map == 0.0);
  CHECK(empty.id_consistency == 0.0);
}
