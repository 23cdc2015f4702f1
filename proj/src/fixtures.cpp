#include "ovvis/fixtures.hpp"

#include <fstream>
#include <json.hpp>

#include "ovvis/evaluation.hpp"

namespace ovvis {

namespace {

FrameMasks parse_frames(const nlohmann::json& frames, size_t num_frames) {
  FrameMasks out(num_frames);
  for (const auto& jf : frames) {
    const size_t f = jf.at("frame").get<size_t>();
    std::vector<uint8_t> mask;
    for (const auto& v : jf.at("mask")) mask.push_back(v.get<int>() ? 1 : 0);
    out.at(f) = std::move(mask);
  }
  return out;
}

std::vector<TrackPrediction> parse_preds(const nlohmann::json& arr, size_t num_frames) {
  std::vector<TrackPrediction> out;
  for (const auto& jp : arr) {
    TrackPrediction p;
    p.video_index = jp.at("video").get<int>();
    p.track_id = jp.at("track").get<int>();
    p.category = 0;
    p.confidence = jp.at("confidence").get<double>();
    p.frames = parse_frames(jp.at("frames"), num_frames);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<TrackGroundTruth> parse_gts(const nlohmann::json& arr, size_t num_frames) {
  std::vector<TrackGroundTruth> out;
  for (const auto& jg : arr) {
    TrackGroundTruth g;
    g.video_index = jg.at("video").get<int>();
    g.track_id = jg.at("track").get<int>();
    g.category = 0;
    g.frames = parse_frames(jg.at("frames"), num_frames);
    out.push_back(std::move(g));
  }
  return out;
}

double expected_value(const nlohmann::json& j) {
  return j.at("num").get<double>() / j.at("den").get<double>();
}

void expect_exact(const std::string& name, double got, double want,
                  std::vector<std::string>& lines) {
  if (got != want) {
    throw FixtureError("fixture '" + name + "': got " + std::to_string(got) +
                       ", expected " + std::to_string(want));
  }
  lines.push_back(name + ": ok");
}

}  // namespace

std::vector<std::string> run_eval_fixtures(const std::string& fixture_path) {
  std::ifstream is(fixture_path);
  if (!is) throw IoError("cannot open fixture file: " + fixture_path);
  nlohmann::json j = nlohmann::json::parse(is);
  std::vector<std::string> lines;

  for (const auto& c : j.at("st_iou_cases")) {
    const size_t nf = c.at("num_frames").get<size_t>();
    const double got = st_iou(parse_frames(c.at("pred"), nf), parse_frames(c.at("gt"), nf));
    expect_exact(c.at("name").get<std::string>(), got, expected_value(c.at("expected")),
                 lines);
  }
  for (const auto& c : j.at("ap_cases")) {
    const size_t nf = c.at("num_frames").get<size_t>();
    const double thr = iou_thresholds().at(c.at("iou_threshold_index").get<size_t>());
    const double got =
        ap_at_threshold(parse_preds(c.at("preds"), nf), parse_gts(c.at("gts"), nf), thr);
    expect_exact(c.at("name").get<std::string>(), got, expected_value(c.at("expected")),
                 lines);
  }
  for (const auto& c : j.at("category_ap_cases")) {
    const size_t nf = c.at("num_frames").get<size_t>();
    const double got =
        category_ap(parse_preds(c.at("preds"), nf), parse_gts(c.at("gts"), nf));
    expect_exact(c.at("name").get<std::string>(), got, expected_value(c.at("expected")),
                 lines);
  }
  return lines;
}

}  // namespace ovvis
