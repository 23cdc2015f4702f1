#include "ovvis/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ovvis/fixtures.hpp"
#include "ovvis/oracles.hpp"
#include "ovvis/plot.hpp"
#include "ovvis/rng.hpp"

namespace ovvis {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write: " + path.string());
  os << text;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path.string());
  return nlohmann::json::parse(is);
}

std::string video_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%04d.json", index);
  return buf;
}

Tensor slice_rows(const Tensor& m, const std::vector<int>& rows) {
  Tensor out({rows.size(), m.dim(1)});
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < m.dim(1); ++c)
      out.at(r, c) = m.at(static_cast<size_t>(rows[r]), c);
  return out;
}

}  // namespace

TrackerInput model_tracker_input(const Model& model, const SyntheticVideo& video,
                                 const ClipImageEmbeddings& full_embeddings,
                                 const TextEmbeddings& vocab) {
  TrackerInput input;
  input.num_frames = video.num_frames();
  input.forward = [&model, &video, &full_embeddings, &vocab](
                      const std::vector<int>& frames, int clip_index) {
    VideoClip clip = make_clip(video, frames, clip_index);
    ClipImageEmbeddings img;
    img.source = full_embeddings.source;
    img.embeddings = slice_rows(full_embeddings.embeddings, frames);
    Tape tape(false);
    ClipPrediction pred = model.forward(tape, clip, img, vocab);
    ClipModelOutput out;
    out.queries = pred.queries.queries.detach();
    out.s_cls = pred.s_cls.detach();
    out.s_ins = pred.s_ins.detach();
    out.masks = pred.masks.detach();
    return out;
  };
  return input;
}

std::vector<VideoResult> infer_dataset(const Model& model, const Dataset& ds,
                                       const InferConfig& icfg,
                                       const std::vector<int>& video_ids) {
  const InferenceScheme scheme = scheme_from_string(icfg.scheme);
  const TrackerConfig tracker = icfg.tracker();
  TextEmbeddings vocab = text_provider(ds);
  std::vector<VideoResult> results;
  for (const auto& video : ds.videos) {
    if (!video_ids.empty() &&
        std::find(video_ids.begin(), video_ids.end(), video.index) == video_ids.end()) {
      continue;
    }
    ClipImageEmbeddings emb = clip_image_provider(video, ds.prototypes, ds.cfg);
    TrackerInput input = model_tracker_input(model, video, emb, vocab);
    results.push_back(run_inference(input, scheme, icfg.clip_len, tracker, video.index));
  }
  return results;
}

EvalReport evaluate_results(const std::vector<VideoResult>& results, const Dataset& ds,
                            nlohmann::json config_echo) {
  std::vector<TrackPrediction> preds;
  std::vector<TrackGroundTruth> gts;
  for (const auto& r : results) {
    std::vector<TrackPrediction> p = predictions_from_result(r);
    preds.insert(preds.end(), p.begin(), p.end());
  }
  for (const auto& v : ds.videos) {
    std::vector<TrackGroundTruth> g = video_ground_truth(v, kStemStride);
    gts.insert(gts.end(), g.begin(), g.end());
  }
  return evaluate(preds, gts, ds.cfg.categories, ds.novel_flags, std::move(config_echo));
}

ClsAccuracy matched_classification_accuracy(const Model& model, const Dataset& ds,
                                            size_t clip_len, const LossWeights& w) {
  TextEmbeddings vocab = text_provider(ds);
  ClsAccuracy acc;
  size_t base_hit = 0, novel_hit = 0;
  for (const auto& video : ds.videos) {
    ClipImageEmbeddings emb = clip_image_provider(video, ds.prototypes, ds.cfg);
    for (size_t start = 0; start < video.num_frames(); start += clip_len) {
      const size_t end = std::min(start + clip_len, video.num_frames());
      std::vector<int> frames;
      for (size_t f = start; f < end; ++f) frames.push_back(static_cast<int>(f));
      GroundTruthClip gt =
          clip_ground_truth(video, frames, kStemStride, ds.cfg.categories);
      if (gt.instances.empty()) continue;
      VideoClip clip = make_clip(video, frames, static_cast<int>(start / clip_len));
      ClipImageEmbeddings img;
      img.source = emb.source;
      img.embeddings = slice_rows(emb.embeddings, frames);
      Tape tape(false);
      ClipPrediction pred = model.forward(tape, clip, img, vocab);
      Tensor costs = pairwise_cost(pred.s_ins, pred.s_cls, pred.masks, gt, w);
      Assignment match = hungarian(costs);
      for (const auto& [p, g] : match.pairs) {
        const int gt_class = gt.instances[static_cast<size_t>(g)].class_id;
        size_t argmax = 0;
        for (size_t k = 1; k < ds.cfg.categories; ++k) {
          if (pred.s_cls.at(static_cast<size_t>(p), k) >
              pred.s_cls.at(static_cast<size_t>(p), argmax)) {
            argmax = k;
          }
        }
        const bool hit = static_cast<int>(argmax) == gt_class;
        if (ds.novel_flags[static_cast<size_t>(gt_class)]) {
          ++acc.novel_count;
          novel_hit += hit ? 1 : 0;
        } else {
          ++acc.base_count;
          base_hit += hit ? 1 : 0;
        }
      }
    }
  }
  acc.base = acc.base_count ? static_cast<double>(base_hit) / acc.base_count : 0.0;
  acc.novel = acc.novel_count ? static_cast<double>(novel_hit) / acc.novel_count : 0.0;
  return acc;
}

Dataset load_or_generate(const ExperimentConfig& cfg, const std::string& data_dir,
                         Split split) {
  if (data_dir.empty()) return generate(cfg.world, split);
  const fs::path sub = fs::path(data_dir) / (split == Split::kTrain ? "train" : "val");
  Dataset ds = load_dataset(sub.string());
  if (ds.cfg.categories != cfg.world.categories ||
      ds.cfg.embed_dim != cfg.world.embed_dim) {
    throw ConfigError("dataset at " + sub.string() + " does not match the world config");
  }
  return ds;
}

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir) {
  save_dataset(generate(cfg.world, Split::kTrain), (fs::path(out_dir) / "train").string());
  save_dataset(generate(cfg.world, Split::kVal), (fs::path(out_dir) / "val").string());
  write_text(fs::path(out_dir) / "config.json", nlohmann::json(cfg).dump(2) + "\n");
}

void run_train(const ExperimentConfig& cfg, const std::string& data_dir,
               const std::string& out_dir) {
  Dataset train_ds = load_or_generate(cfg, data_dir, Split::kTrain);
  Model model(cfg.model, cfg.train.seed);
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "train_log.csv", std::ios::trunc | std::ios::binary);
  if (!log) throw IoError("cannot write training log in " + out_dir);
  TrainResult result = train_model(model, train_ds, cfg.train, &log);
  model.save_checkpoint((fs::path(out_dir) / "checkpoint").string());
  write_text(fs::path(out_dir) / "config.json",
             nlohmann::json(cfg).dump(2) + "\n");
  if (!result.losses.empty()) {
    std::printf("trained %zu steps, loss %.6f -> %.6f\n", result.losses.size(),
                result.losses.front(), result.losses.back());
  }
}

void run_infer(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
               const std::string& data_dir, const std::string& out_dir,
               const std::vector<int>& video_ids) {
  Dataset val = load_or_generate(cfg, data_dir, Split::kVal);
  Model model(cfg.model, cfg.train.seed);
  model.load_checkpoint(checkpoint_dir);
  std::vector<VideoResult> results = infer_dataset(model, val, cfg.infer, video_ids);
  fs::create_directories(out_dir);
  const nlohmann::json echo = cfg;
  for (const auto& r : results) {
    nlohmann::json j = video_result_to_json(r);
    j["config"] = echo;
    write_text(fs::path(out_dir) / video_file_name(r.video_index), j.dump(2) + "\n");
  }
}

EvalReport run_eval(const ExperimentConfig& cfg, const std::string& data_dir,
                    const std::string& results_dir, const std::string& out_dir) {
  Dataset val = load_or_generate(cfg, data_dir, Split::kVal);
  if (!fs::is_directory(results_dir)) {
    throw ConfigError("missing results directory: " + results_dir);
  }
  std::vector<VideoResult> results;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(results_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (files.empty()) throw ConfigError("no result JSON files in " + results_dir);
  std::sort(files.begin(), files.end());
  for (const auto& f : files) results.push_back(video_result_from_json(read_json(f)));

  EvalReport report = evaluate_results(results, val, nlohmann::json(cfg));
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "report.json",
             eval_report_to_json(report, val.category_names, val.novel_flags).dump(2) + "\n");
  write_text(fs::path(out_dir) / "per_category_ap.csv",
             eval_report_csv(report, val.category_names, val.novel_flags));
  return report;
}

void run_sweep(const ExperimentConfig& cfg, const std::string& axis,
               const std::vector<std::string>& values, const std::string& out_dir) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  const bool retrain_per_value = axis == "uea_enabled";
  if (axis != "uea_enabled" && axis != "clip_len" && axis != "scheme") {
    throw ConfigError("sweep: unknown axis '" + axis + "' (uea_enabled|clip_len|scheme)");
  }

  Dataset train_ds = load_or_generate(cfg, "", Split::kTrain);
  Dataset val_ds = load_or_generate(cfg, "", Split::kVal);

  std::unique_ptr<Model> shared_model;
  if (!retrain_per_value) {
    shared_model = std::make_unique<Model>(cfg.model, cfg.train.seed);
    train_model(*shared_model, train_ds, cfg.train, nullptr);
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "axis,value,mAP,mAP_b,mAP_n,id_switches,id_consistency,cls_acc_base,cls_acc_novel\n";
  std::vector<double> xs;
  PlotSeries map_series{{}, 30, 90, 200};
  PlotSeries novel_series{{}, 200, 80, 30};

  for (size_t vi = 0; vi < values.size(); ++vi) {
    const std::string& value = values[vi];
    ExperimentConfig run_cfg = cfg;
    double x = static_cast<double>(vi);
    if (axis == "uea_enabled") {
      if (value != "true" && value != "false") {
        throw ConfigError("sweep uea_enabled: values must be true/false");
      }
      run_cfg.model.uea_enabled = value == "true";
      x = run_cfg.model.uea_enabled ? 1.0 : 0.0;
    } else if (axis == "clip_len") {
      run_cfg.infer.scheme = "semi_online";
      run_cfg.infer.clip_len = static_cast<size_t>(std::stoul(value));
      x = static_cast<double>(run_cfg.infer.clip_len);
    } else {
      run_cfg.infer.scheme = value;
      scheme_from_string(value);
    }

    const Model* model = shared_model.get();
    std::unique_ptr<Model> own;
    if (retrain_per_value) {
      own = std::make_unique<Model>(run_cfg.model, run_cfg.train.seed);
      train_model(*own, train_ds, run_cfg.train, nullptr);
      model = own.get();
    }

    std::vector<VideoResult> results = infer_dataset(*model, val_ds, run_cfg.infer);
    EvalReport report = evaluate_results(results, val_ds, nlohmann::json(run_cfg));
    ClsAccuracy acc = matched_classification_accuracy(*model, val_ds,
                                                      run_cfg.infer.clip_len,
                                                      run_cfg.train.loss_weights());
    csv << axis << "," << value << "," << report.map << "," << report.map_base << ","
        << report.map_novel << "," << report.id_switches << "," << report.id_consistency
        << "," << acc.base << "," << acc.novel << "\n";
    xs.push_back(x);
    map_series.y.push_back(report.map);
    novel_series.y.push_back(report.map_novel);
  }

  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "sweep.csv", csv.str());
  write_line_plot_bmp((fs::path(out_dir) / "sweep.bmp").string(), xs,
                      {map_series, novel_series});
  write_text(fs::path(out_dir) / "config.json", nlohmann::json(cfg).dump(2) + "\n");
}

int run_selftest(const std::string& fixture_path, std::ostream& out) {
  // Hungarian against exhaustive enumeration.
  {
    Rng rng(0xC0FFEE);
    size_t checks = 0;
    for (size_t p = 1; p <= 5; ++p)
      for (size_t g = 1; g <= 5; ++g)
        for (int trial = 0; trial < 100; ++trial) {
          Tensor costs({p, g});
          for (size_t i = 0; i < costs.numel(); ++i) costs.at(i) = rng.uniform(-1.0, 2.0);
          if (hungarian(costs).total_cost != brute_force_min_assignment(costs).min_cost) {
            throw FixtureError("selftest: hungarian mismatch at shape " +
                               std::to_string(p) + "x" + std::to_string(g));
          }
          ++checks;
        }
    out << "hungarian-oracle: ok (" << checks << " matrices)\n";
  }

  // Gradient checks on the primitive ops and both composite paths.
  {
    Rng rng(0x9D);
    auto rand_tensor = [&rng](std::vector<size_t> shape, double lo = -1.0, double hi = 1.0) {
      Tensor t(std::move(shape));
      for (size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
      return t;
    };
    Tensor a = rand_tensor({3, 4});
    Tensor b = rand_tensor({3, 4});
    struct Case {
      const char* name;
      TensorFn fn;
      double tol;
    };
    const Tensor w = rand_tensor({4, 3});
    std::vector<Case> cases = {
        {"sigmoid", [](Tape& t, const Tensor& x) { return t.sigmoid(x); }, 1e-6},
        {"softmax", [](Tape& t, const Tensor& x) { return t.softmax(x); }, 1e-6},
        {"matmul", [&](Tape& t, const Tensor& x) { return t.matmul(x, w); }, 1e-6},
        {"layer_norm",
         [](Tape& t, const Tensor& x) {
           return t.layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}));
         },
         1e-5},
        {"mul", [&](Tape& t, const Tensor& x) { return t.mul(x, b); }, 1e-6},
    };
    for (const auto& c : cases) {
      const double err = grad_check(c.fn, a);
      if (err >= c.tol) {
        throw FixtureError(std::string("selftest: grad_check ") + c.name +
                           " error " + std::to_string(err));
      }
    }

    AlignmentConfig acfg;
    acfg.channels = 8;
    acfg.embed_dim = 4;
    ParamStore uea;
    register_alignment_params(uea, acfg, 3);
    ClipImageEmbeddings img;
    img.embeddings = rand_tensor({3, 4});
    Tape norm_tape(false);
    img.embeddings = norm_tape.l2_normalize(img.embeddings);
    const double uea_err = grad_check(
        [&](Tape& t, const Tensor& x) {
          Tensor proj = project_queries(t, x, uea, acfg);
          return align(t, proj, img, uea, acfg).embeddings;
        },
        rand_tensor({2, 8}));
    if (uea_err >= 1e-4) {
      throw FixtureError("selftest: UEA grad_check error " + std::to_string(uea_err));
    }
    out << "grad-checks: ok (" << cases.size() + 1 << " paths)\n";
  }

  for (const std::string& line : run_eval_fixtures(fixture_path)) {
    out << "fixture " << line << "\n";
  }
  return 0;
}

}  // namespace ovvis
