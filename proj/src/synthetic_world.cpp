#include "ovvis/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ovvis/ovtf.hpp"
#include "ovvis/rng.hpp"

namespace ovvis {

namespace fs = std::filesystem;

size_t WorldConfig::num_novel() const {
  const double novel = static_cast<double>(categories) * (1.0 - base_ratio);
  return static_cast<size_t>(std::llround(novel));
}

void WorldConfig::validate() const {
  if (categories == 0) throw ConfigError("world: need at least one category");
  if (embed_dim < 2) throw ConfigError("world: embed_dim too small");
  if (height < 8 || width < 8) throw ConfigError("world: grid must be at least 8x8");
  if (frames_per_video == 0) throw ConfigError("world: zero frames per video");
  if (instances_min == 0 || instances_min > instances_max) {
    throw ConfigError("world: bad instance count range");
  }
  if (noise_sigma < 0.0) throw ConfigError("world: negative noise sigma");
  if (domain_gap != "identity" && domain_gap != "hidden_rotation") {
    throw ConfigError("world: unknown domain gap mode: " + domain_gap);
  }
  if (base_ratio <= 0.0 || base_ratio > 1.0) {
    throw ConfigError("world: base ratio must be in (0, 1]");
  }
  // Rough feasibility: the smallest instances must fit several times over.
  const size_t min_extent = std::max<size_t>(2, height / 10);
  if (instances_max * (2 * min_extent + 1) * (2 * min_extent + 1) > height * width / 2) {
    throw ConfigError("world: instance count infeasible for grid size");
  }
}

void to_json(nlohmann::json& j, const WorldConfig& cfg) {
  j = nlohmann::json{{"categories", cfg.categories},
                     {"embed_dim", cfg.embed_dim},
                     {"height", cfg.height},
                     {"width", cfg.width},
                     {"frames_per_video", cfg.frames_per_video},
                     {"instances_min", cfg.instances_min},
                     {"instances_max", cfg.instances_max},
                     {"speed", cfg.speed},
                     {"noise_sigma", cfg.noise_sigma},
                     {"base_ratio", cfg.base_ratio},
                     {"domain_gap", cfg.domain_gap},
                     {"seed", cfg.seed},
                     {"videos_train", cfg.videos_train},
                     {"videos_val", cfg.videos_val}};
}

void from_json(const nlohmann::json& j, WorldConfig& cfg) {
  WorldConfig defaults;
  cfg.categories = j.value("categories", defaults.categories);
  cfg.embed_dim = j.value("embed_dim", defaults.embed_dim);
  cfg.height = j.value("height", defaults.height);
  cfg.width = j.value("width", defaults.width);
  cfg.frames_per_video = j.value("frames_per_video", defaults.frames_per_video);
  cfg.instances_min = j.value("instances_min", defaults.instances_min);
  cfg.instances_max = j.value("instances_max", defaults.instances_max);
  cfg.speed = j.value("speed", defaults.speed);
  cfg.noise_sigma = j.value("noise_sigma", defaults.noise_sigma);
  cfg.base_ratio = j.value("base_ratio", defaults.base_ratio);
  cfg.domain_gap = j.value("domain_gap", defaults.domain_gap);
  cfg.seed = j.value("seed", defaults.seed);
  cfg.videos_train = j.value("videos_train", defaults.videos_train);
  cfg.videos_val = j.value("videos_val", defaults.videos_val);
}

namespace {

// Unit rows with pairwise |dot| < 0.3. A seeded random start followed by
// fixed-iteration descent on a hinge penalty for dots above 0.25, which
// packs more vectors than rejection sampling can, e.g. 12 categories in 8
// dimensions (Welch bound 0.213).
Tensor make_prototypes(const WorldConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, fnv1a("prototypes")));
  const size_t K = cfg.categories, C = cfg.embed_dim;
  Tensor protos({K, C});
  for (size_t i = 0; i < protos.numel(); ++i) protos.at(i) = rng.normal();
  auto renormalize = [&](size_t k) {
    double norm = 0.0;
    for (size_t c = 0; c < C; ++c) norm += protos.at(k, c) * protos.at(k, c);
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw NumericError("world: degenerate prototype draw");
    for (size_t c = 0; c < C; ++c) protos.at(k, c) /= norm;
  };
  for (size_t k = 0; k < K; ++k) renormalize(k);

  constexpr double kLr = 0.2, kTarget = 0.25;
  std::vector<double> grad(C);
  for (int iter = 0; iter < 2000; ++iter) {
    for (size_t k = 0; k < K; ++k) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t j = 0; j < K; ++j) {
        if (j == k) continue;
        double dot = 0.0;
        for (size_t c = 0; c < C; ++c) dot += protos.at(k, c) * protos.at(j, c);
        const double excess = std::abs(dot) - kTarget;
        if (excess <= 0.0) continue;
        const double signed_excess = dot > 0.0 ? excess : -excess;
        for (size_t c = 0; c < C; ++c) grad[c] += signed_excess * protos.at(j, c);
      }
      for (size_t c = 0; c < C; ++c) protos.at(k, c) -= kLr * grad[c];
      renormalize(k);
    }
  }
  for (size_t a = 0; a < K; ++a)
    for (size_t b = a + 1; b < K; ++b) {
      double dot = 0.0;
      for (size_t c = 0; c < C; ++c) dot += protos.at(a, c) * protos.at(b, c);
      if (std::abs(dot) >= 0.3) {
        throw ConfigError("world: cannot pack " + std::to_string(K) +
                          " near-orthogonal prototypes in dimension " + std::to_string(C));
      }
    }
  return protos;
}

// Orthogonal matrix via Gram-Schmidt on a Gaussian draw.
Tensor make_hidden_transform(const WorldConfig& cfg) {
  const size_t C = cfg.embed_dim;
  Tensor a({C, C});
  if (cfg.domain_gap == "identity") {
    for (size_t i = 0; i < C; ++i) a.at(i, i) = 1.0;
    return a;
  }
  Rng rng(mix_seed(cfg.seed, fnv1a("hidden_transform")));
  for (size_t i = 0; i < a.numel(); ++i) a.at(i) = rng.normal();
  for (size_t c = 0; c < C; ++c) {
    for (size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (size_t r = 0; r < C; ++r) dot += a.at(r, c) * a.at(r, prev);
      for (size_t r = 0; r < C; ++r) a.at(r, c) -= dot * a.at(r, prev);
    }
    double norm = 0.0;
    for (size_t r = 0; r < C; ++r) norm += a.at(r, c) * a.at(r, c);
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw NumericError("world: degenerate hidden transform draw");
    for (size_t r = 0; r < C; ++r) a.at(r, c) /= norm;
  }
  return a;
}

struct MovingInstance {
  int class_id;
  bool ellipse;
  double rx, ry;
  double cx, cy;
  double vx, vy;
};

void step_with_bounce(double& pos, double& vel, double radius, double bound) {
  pos += vel;
  const double lo = radius, hi = bound - 1.0 - radius;
  if (pos < lo) {
    pos = lo + (lo - pos);
    vel = -vel;
  } else if (pos > hi) {
    pos = hi - (pos - hi);
    vel = -vel;
  }
  pos = std::clamp(pos, lo, hi);
}

bool covers(const MovingInstance& m, double x, double y) {
  const double dx = (x - m.cx) / m.rx;
  const double dy = (y - m.cy) / m.ry;
  if (m.ellipse) return dx * dx + dy * dy <= 1.0;
  return std::abs(x - m.cx) <= m.rx && std::abs(y - m.cy) <= m.ry;
}

SyntheticVideo generate_video(const WorldConfig& cfg, const Tensor& prototypes,
                              const Tensor& hidden, const std::vector<int>& classes,
                              int index, uint64_t seed) {
  Rng rng(seed);
  const size_t T = cfg.frames_per_video, H = cfg.height, W = cfg.width;
  const size_t C = cfg.embed_dim;
  const size_t n_inst = classes.size();

  // Visual signatures v_k = A . p_k for the classes in this video.
  std::vector<std::vector<double>> signatures(n_inst, std::vector<double>(C, 0.0));
  for (size_t i = 0; i < n_inst; ++i) {
    for (size_t r = 0; r < C; ++r) {
      double acc = 0.0;
      for (size_t c = 0; c < C; ++c) {
        acc += hidden.at(r, c) * prototypes.at(static_cast<size_t>(classes[i]), c);
      }
      signatures[i][r] = acc;
    }
  }

  const double min_extent = std::max(2.0, static_cast<double>(H) / 10.0);
  const double max_extent = std::max(min_extent + 1.0, static_cast<double>(H) / 5.0);
  std::vector<MovingInstance> movers;
  for (size_t i = 0; i < n_inst; ++i) {
    MovingInstance m;
    m.class_id = classes[i];
    m.ellipse = rng.uniform() < 0.5;
    m.rx = rng.uniform(min_extent, max_extent);
    m.ry = rng.uniform(min_extent, max_extent);
    m.cx = rng.uniform(m.rx, static_cast<double>(W) - 1.0 - m.rx);
    m.cy = rng.uniform(m.ry, static_cast<double>(H) - 1.0 - m.ry);
    const double angle = rng.uniform(0.0, 6.283185307179586);
    m.vx = cfg.speed * std::cos(angle);
    m.vy = cfg.speed * std::sin(angle);
    movers.push_back(m);
  }

  SyntheticVideo video;
  video.index = index;
  video.seed = seed;
  video.frames = Tensor({T, C, H, W});
  for (size_t i = 0; i < n_inst; ++i) {
    video.instance_masks.emplace_back(Tensor({T, H, W}));
    video.class_ids.push_back(classes[i]);
    video.track_ids.push_back(static_cast<int>(i));
  }

  for (size_t t = 0; t < T; ++t) {
    if (t > 0) {
      for (auto& m : movers) {
        step_with_bounce(m.cx, m.vx, m.rx, static_cast<double>(W));
        step_with_bounce(m.cy, m.vy, m.ry, static_cast<double>(H));
      }
    }
    // Later instances occlude earlier ones; visible masks stay disjoint.
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x) {
        int top = -1;
        for (size_t i = 0; i < n_inst; ++i) {
          if (covers(movers[i], static_cast<double>(x), static_cast<double>(y))) {
            top = static_cast<int>(i);
          }
        }
        if (top >= 0) {
          video.instance_masks[static_cast<size_t>(top)].at((t * H + y) * W + x) = 1.0;
          for (size_t c = 0; c < C; ++c) {
            video.frames.at(((t * C + c) * H + y) * W + x) =
                signatures[static_cast<size_t>(top)][c];
          }
        }
      }
  }
  if (cfg.noise_sigma > 0.0) {
    for (size_t i = 0; i < video.frames.numel(); ++i) {
      video.frames.at(i) += rng.normal(0.0, cfg.noise_sigma);
    }
  }
  return video;
}

}  // namespace

WorldCategories make_categories(const WorldConfig& cfg) {
  cfg.validate();
  WorldCategories cats;
  cats.prototypes = make_prototypes(cfg);
  cats.hidden_transform = make_hidden_transform(cfg);
  const size_t base = cfg.num_base();
  for (size_t k = 0; k < cfg.categories; ++k) {
    std::string name = "category_";
    if (k < 10) name += "0";
    name += std::to_string(k);
    cats.names.push_back(name);
    cats.novel_flags.push_back(k >= base);
  }
  return cats;
}

Dataset generate(const WorldConfig& cfg, Split split) {
  WorldCategories cats = make_categories(cfg);
  Dataset ds;
  ds.cfg = cfg;
  ds.split = split;
  ds.category_names = cats.names;
  ds.novel_flags = cats.novel_flags;
  ds.prototypes = cats.prototypes;
  ds.hidden_transform = cats.hidden_transform;

  const size_t base = cfg.num_base();
  const size_t count = split == Split::kTrain ? cfg.videos_train : cfg.videos_val;
  const uint64_t split_tag = split == Split::kTrain ? fnv1a("train") : fnv1a("val");
  for (size_t i = 0; i < count; ++i) {
    const uint64_t seed = mix_seed(mix_seed(cfg.seed, split_tag), i);
    Rng pick(mix_seed(seed, fnv1a("classes")));
    const size_t n_inst = static_cast<size_t>(
        pick.uniform_int(static_cast<int>(cfg.instances_min),
                         static_cast<int>(cfg.instances_max)));
    std::vector<int> classes;
    const size_t pool = split == Split::kTrain ? base : cfg.categories;
    // Stratified first instance so every category in the pool shows up.
    classes.push_back(static_cast<int>(i % pool));
    for (size_t j = 1; j < n_inst; ++j) {
      classes.push_back(pick.uniform_int(0, static_cast<int>(pool) - 1));
    }
    ds.videos.push_back(generate_video(cfg, ds.prototypes, ds.hidden_transform,
                                       classes, static_cast<int>(i), seed));
  }
  return ds;
}

ClipImageEmbeddings clip_image_provider(const SyntheticVideo& video,
                                        const Tensor& prototypes,
                                        const WorldConfig& cfg) {
  const size_t T = video.num_frames();
  const size_t C = cfg.embed_dim;
  const size_t H = cfg.height, W = cfg.width;
  Rng rng(mix_seed(video.seed, fnv1a("clip_image")));
  ClipImageEmbeddings out;
  out.source = "synthetic";
  out.embeddings = Tensor({T, C});
  for (size_t t = 0; t < T; ++t) {
    // Instances weigh in by their share of the visible instance area, so a
    // frame's embedding is dominated by its objects, not by background.
    std::vector<double> visible(video.instance_masks.size(), 0.0);
    double total_visible = 0.0;
    for (size_t i = 0; i < video.instance_masks.size(); ++i) {
      const double* mp = video.instance_masks[i].data() + t * H * W;
      for (size_t px = 0; px < H * W; ++px) visible[i] += mp[px];
      total_visible += visible[i];
    }
    std::vector<double> row(C, 0.0);
    for (size_t i = 0; i < video.instance_masks.size(); ++i) {
      if (visible[i] == 0.0 || total_visible == 0.0) continue;
      const double frac = visible[i] / total_visible;
      const size_t k = static_cast<size_t>(video.class_ids[i]);
      for (size_t c = 0; c < C; ++c) row[c] += frac * prototypes.at(k, c);
    }
    if (cfg.noise_sigma > 0.0) {
      for (size_t c = 0; c < C; ++c) row[c] += rng.normal(0.0, cfg.noise_sigma);
    }
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 1e-12) {
      for (size_t c = 0; c < C; ++c) out.embeddings.at(t, c) = row[c] / norm;
    }
    // else: empty frame stays an all-zero row.
  }
  out.validate_rows();  // provider contract is enforced here, not in align
  return out;
}

TextEmbeddings text_provider(const WorldCategories& categories) {
  TextEmbeddings te;
  te.embeddings = categories.prototypes.clone();
  te.category_names = categories.names;
  te.novel_flags = categories.novel_flags;
  te.validate();
  return te;
}

TextEmbeddings text_provider(const Dataset& ds) {
  WorldCategories cats;
  cats.names = ds.category_names;
  cats.novel_flags = ds.novel_flags;
  cats.prototypes = ds.prototypes;
  return text_provider(cats);
}

Tensor downsample_mask(const Tensor& full, size_t stride) {
  if (full.rank() != 3) {
    throw ShapeError("downsample_mask: expected T x H x W, got " + shape_str(full.shape()));
  }
  if (stride == 0 || full.dim(1) % stride != 0 || full.dim(2) % stride != 0) {
    throw ConfigError("downsample_mask: dimensions not divisible by stride");
  }
  const size_t T = full.dim(0), H = full.dim(1), W = full.dim(2);
  const size_t h = H / stride, w = W / stride;
  Tensor out({T, h, w});
  const size_t block = stride * stride;
  for (size_t t = 0; t < T; ++t)
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        size_t count = 0;
        for (size_t dy = 0; dy < stride; ++dy)
          for (size_t dx = 0; dx < stride; ++dx) {
            if (full.at((t * H + y * stride + dy) * W + x * stride + dx) != 0.0) ++count;
          }
        out.at((t * h + y) * w + x) = (2 * count >= block) ? 1.0 : 0.0;
      }
  return out;
}

GroundTruthClip clip_ground_truth(const SyntheticVideo& video,
                                  const std::vector<int>& frame_indices,
                                  size_t stride, size_t num_categories) {
  const size_t H = video.frames.dim(2), W = video.frames.dim(3);
  GroundTruthClip gt;
  gt.num_categories = num_categories;
  for (size_t i = 0; i < video.instance_masks.size(); ++i) {
    const Tensor& full = video.instance_masks[i];
    Tensor subset({frame_indices.size(), H, W});
    double visible = 0.0;
    for (size_t f = 0; f < frame_indices.size(); ++f) {
      const size_t t = static_cast<size_t>(frame_indices[f]);
      for (size_t px = 0; px < H * W; ++px) {
        const double v = full.at(t * H * W + px);
        subset.at(f * H * W + px) = v;
        visible += v;
      }
    }
    if (visible == 0.0) continue;  // not in this clip
    GroundTruthInstance inst;
    inst.class_id = video.class_ids[i];
    inst.masks = downsample_mask(subset, stride);
    inst.present = true;
    gt.instances.push_back(std::move(inst));
  }
  return gt;
}

VideoClip make_clip(const SyntheticVideo& video, const std::vector<int>& frame_indices,
                    int clip_index) {
  const size_t C = video.frames.dim(1), H = video.frames.dim(2), W = video.frames.dim(3);
  VideoClip clip;
  clip.clip_index = clip_index;
  clip.frame_indices = frame_indices;
  clip.frames = Tensor({frame_indices.size(), C, H, W});
  const size_t frame_numel = C * H * W;
  for (size_t f = 0; f < frame_indices.size(); ++f) {
    const size_t t = static_cast<size_t>(frame_indices[f]);
    std::copy(video.frames.data() + t * frame_numel,
              video.frames.data() + (t + 1) * frame_numel,
              clip.frames.data() + f * frame_numel);
  }
  return clip;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["config"] = ds.cfg;
  manifest["split"] = ds.split == Split::kTrain ? "train" : "val";
  nlohmann::json cats = nlohmann::json::array();
  for (size_t k = 0; k < ds.category_names.size(); ++k) {
    cats.push_back({{"id", k},
                    {"name", ds.category_names[k]},
                    {"novel", static_cast<bool>(ds.novel_flags[k])}});
  }
  manifest["categories"] = cats;
  manifest["prototypes"] = "prototypes.ovtf";
  manifest["hidden_transform"] = "hidden_transform.ovtf";
  save_ovtf((fs::path(dir) / "prototypes.ovtf").string(), ds.prototypes);
  save_ovtf((fs::path(dir) / "hidden_transform.ovtf").string(), ds.hidden_transform);

  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : ds.videos) {
    char tag[16];
    std::snprintf(tag, sizeof(tag), "%04d", v.index);
    const std::string frames_file = std::string("video_") + tag + ".frames.ovtf";
    const std::string masks_file = std::string("video_") + tag + ".masks.ovtf";
    save_ovtf((fs::path(dir) / frames_file).string(), v.frames);
    // Masks stacked as I x T x H x W.
    const size_t I = v.instance_masks.size();
    const size_t per = I ? v.instance_masks[0].numel() : 0;
    Tensor stack(I ? std::vector<size_t>{I, v.instance_masks[0].dim(0),
                                         v.instance_masks[0].dim(1),
                                         v.instance_masks[0].dim(2)}
                   : std::vector<size_t>{0, 0, 0, 0});
    for (size_t i = 0; i < I; ++i) {
      std::copy(v.instance_masks[i].data(), v.instance_masks[i].data() + per,
                stack.data() + i * per);
    }
    save_ovtf((fs::path(dir) / masks_file).string(), stack, OvtfDtype::kF32);
    videos.push_back({{"index", v.index},
                      {"seed", v.seed},
                      {"frames", frames_file},
                      {"masks", masks_file},
                      {"class_ids", v.class_ids},
                      {"track_ids", v.track_ids}});
  }
  manifest["videos"] = videos;
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write dataset manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("missing dataset manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  Dataset ds;
  ds.cfg = manifest.at("config").get<WorldConfig>();
  ds.split = manifest.at("split").get<std::string>() == "train" ? Split::kTrain : Split::kVal;
  for (const auto& c : manifest.at("categories")) {
    ds.category_names.push_back(c.at("name").get<std::string>());
    ds.novel_flags.push_back(c.at("novel").get<bool>());
  }
  ds.prototypes = load_ovtf((fs::path(dir) / manifest.at("prototypes").get<std::string>()).string());
  ds.hidden_transform =
      load_ovtf((fs::path(dir) / manifest.at("hidden_transform").get<std::string>()).string());
  for (const auto& jv : manifest.at("videos")) {
    SyntheticVideo v;
    v.index = jv.at("index").get<int>();
    v.seed = jv.at("seed").get<uint64_t>();
    v.frames = load_ovtf((fs::path(dir) / jv.at("frames").get<std::string>()).string());
    Tensor stack = load_ovtf((fs::path(dir) / jv.at("masks").get<std::string>()).string());
    v.class_ids = jv.at("class_ids").get<std::vector<int>>();
    v.track_ids = jv.at("track_ids").get<std::vector<int>>();
    const size_t I = stack.dim(0);
    for (size_t i = 0; i < I; ++i) {
      Tensor m({stack.dim(1), stack.dim(2), stack.dim(3)});
      std::copy(stack.data() + i * m.numel(), stack.data() + (i + 1) * m.numel(), m.data());
      v.instance_masks.push_back(std::move(m));
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

}  // namespace ovvis
