#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ovvis/synthetic_world.hpp"

using namespace ovvis;

namespace {

WorldConfig small_world() {
  WorldConfig cfg;
  cfg.categories = 6;
  cfg.embed_dim = 8;
  cfg.height = 16;
  cfg.width = 16;
  cfg.frames_per_video = 6;
  cfg.instances_min = 1;
  cfg.instances_max = 2;
  cfg.base_ratio = 2.0 / 3.0;
  cfg.videos_train = 6;
  cfg.videos_val = 6;
  cfg.noise_sigma = 0.05;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("prototypes are unit and near-orthogonal; split bookkeeping holds") {
  WorldConfig cfg = small_world();
  WorldCategories cats = make_categories(cfg);
  const size_t K = cfg.categories, C = cfg.embed_dim;
  for (size_t a = 0; a < K; ++a) {
    double n = 0.0;
    for (size_t c = 0; c < C; ++c) n += cats.prototypes.at(a, c) * cats.prototypes.at(a, c);
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
    for (size_t b = a + 1; b < K; ++b) {
      double dot = 0.0;
      for (size_t c = 0; c < C; ++c) dot += cats.prototypes.at(a, c) * cats.prototypes.at(b, c);
      CHECK(std::abs(dot) < 0.3);
    }
  }
  size_t novel = 0;
  for (bool f : cats.novel_flags) novel += f ? 1 : 0;
  CHECK(novel == cfg.num_novel());
  CHECK(novel == static_cast<size_t>(std::llround(K * (1.0 - cfg.base_ratio))));

  TextEmbeddings te = text_provider(cats);
  CHECK(te.embeddings.values() == cats.prototypes.values());
  CHECK(te.category_names.size() == K);
}

TEST_CASE("identity mode, sigma=0: instance pixels equal the prototype exactly") {
  WorldConfig cfg = small_world();
  cfg.domain_gap = "identity";
  cfg.noise_sigma = 0.0;
  cfg.instances_min = cfg.instances_max = 1;
  Dataset ds = generate(cfg, Split::kTrain);
  const auto& v = ds.videos[0];
  const size_t K = cfg.categories;
  const size_t C = cfg.embed_dim, H = cfg.height, W = cfg.width;
  const size_t k = static_cast<size_t>(v.class_ids[0]);
  size_t checked = 0;
  for (size_t t = 0; t < v.num_frames(); ++t)
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x) {
        if (v.instance_masks[0].at((t * H + y) * W + x) == 0.0) continue;
        for (size_t c = 0; c < C; ++c) {
          CHECK(v.frames.at(((t * C + c) * H + y) * W + x) == ds.prototypes.at(k, c));
        }
        ++checked;
      }
  CHECK(checked > 0);

  // Nearest-prototype classification of a raw signature is exact here.
  for (size_t kk = 0; kk < K; ++kk) {
    size_t best = 0;
    double best_dot = -2.0;
    for (size_t j = 0; j < K; ++j) {
      double dot = 0.0;
      for (size_t c = 0; c < C; ++c) dot += ds.prototypes.at(kk, c) * ds.prototypes.at(j, c);
      if (dot > best_dot) {
        best_dot = dot;
        best = j;
      }
    }
    CHECK(best == kk);
  }
}

TEST_CASE("hidden rotation preserves signature norms and hides prototypes") {
  WorldConfig cfg = small_world();
  WorldCategories cats = make_categories(cfg);
  const size_t K = cfg.categories, C = cfg.embed_dim;
  for (size_t k = 0; k < K; ++k) {
    double n = 0.0;
    for (size_t r = 0; r < C; ++r) {
      double v = 0.0;
      for (size_t c = 0; c < C; ++c) v += cats.hidden_transform.at(r, c) * cats.prototypes.at(k, c);
      n += v * v;
    }
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
  }

  // cos(v_k, p_k) averages near zero over random transforms.
  double acc = 0.0;
  size_t count = 0;
  for (uint64_t s = 1; s <= 20; ++s) {
    WorldConfig c2 = cfg;
    c2.seed = s * 1000;
    WorldCategories cc = make_categories(c2);
    for (size_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (size_t r = 0; r < C; ++r) {
        double v = 0.0;
        for (size_t c = 0; c < C; ++c) v += cc.hidden_transform.at(r, c) * cc.prototypes.at(k, c);
        dot += v * cc.prototypes.at(k, r);
      }
      acc += dot;
      ++count;
    }
  }
  CHECK(std::abs(acc / static_cast<double>(count)) < 0.15);
}

TEST_CASE("generation is deterministic and masks stay disjoint per frame") {
  WorldConfig cfg = small_world();
  Dataset a = generate(cfg, Split::kVal);
  Dataset b = generate(cfg, Split::kVal);
  REQUIRE(a.videos.size() == b.videos.size());
  for (size_t i = 0; i < a.videos.size(); ++i) {
    CHECK(a.videos[i].frames.values() == b.videos[i].frames.values());
    CHECK(a.videos[i].class_ids == b.videos[i].class_ids);
  }
  for (const auto& v : a.videos) {
    const size_t HW = cfg.height * cfg.width;
    for (size_t t = 0; t < v.num_frames(); ++t)
      for (size_t px = 0; px < HW; ++px) {
        double sum = 0.0;
        for (const auto& m : v.instance_masks) sum += m.at(t * HW + px);
        CHECK(sum <= 1.0);
      }
    std::set<int> ids(v.track_ids.begin(), v.track_ids.end());
    CHECK(ids.size() == v.track_ids.size());
  }
}

TEST_CASE("train split uses base categories only; val covers every category") {
  WorldConfig cfg = small_world();
  cfg.videos_val = cfg.categories * 2;
  Dataset train = generate(cfg, Split::kTrain);
  const size_t base = cfg.num_base();
  for (const auto& v : train.videos)
    for (int c : v.class_ids) CHECK(static_cast<size_t>(c) < base);

  Dataset val = generate(cfg, Split::kVal);
  std::set<int> seen;
  for (const auto& v : val.videos)
    for (int c : v.class_ids) seen.insert(c);
  CHECK(seen.size() == cfg.categories);
}

TEST_CASE("image provider: single instance, empty frame, equal-area pair") {
  WorldConfig cfg = small_world();
  cfg.noise_sigma = 0.0;
  WorldCategories cats = make_categories(cfg);
  const size_t C = cfg.embed_dim, H = cfg.height, W = cfg.width;

  SyntheticVideo v;
  v.seed = 7;
  v.frames = Tensor({3, C, H, W});
  v.class_ids = {1, 3};
  v.track_ids = {0, 1};
  Tensor m0({3, H, W}), m1({3, H, W});
  // Frame 0: instance 0 covers 8 pixels. Frame 1: empty. Frame 2: both
  // instances cover 4 pixels each.
  for (size_t px = 0; px < 8; ++px) m0.at(px) = 1.0;
  for (size_t px = 0; px < 4; ++px) m0.at(2 * H * W + px) = 1.0;
  for (size_t px = 8; px < 12; ++px) m1.at(2 * H * W + px) = 1.0;
  v.instance_masks = {m0, m1};

  ClipImageEmbeddings e = clip_image_provider(v, cats.prototypes, cfg);
  e.validate_rows();
  for (size_t c = 0; c < C; ++c) {
    CHECK(e.embeddings.at(0, c) == doctest::Approx(cats.prototypes.at(1, c)).epsilon(1e-12));
    CHECK(e.embeddings.at(1, c) == 0.0);
  }
  // Equal areas: direction of (p_1 + p_3) / ||p_1 + p_3||.
  std::vector<double> mix(C);
  double n = 0.0;
  for (size_t c = 0; c < C; ++c) {
    mix[c] = cats.prototypes.at(1, c) + cats.prototypes.at(3, c);
    n += mix[c] * mix[c];
  }
  n = std::sqrt(n);
  for (size_t c = 0; c < C; ++c)
    CHECK(e.embeddings.at(2, c) == doctest::Approx(mix[c] / n).epsilon(1e-12));

  ClipImageEmbeddings e2 = clip_image_provider(v, cats.prototypes, cfg);
  CHECK(e.embeddings.values() == e2.embeddings.values());
}

TEST_CASE("downsample majority rule and clip ground truth") {
  Tensor full({1, 4, 4});
  // Top-left 2x2 block fully on, top-right block half on, bottom blocks off.
  full.at(0 * 4 + 0) = full.at(0 * 4 + 1) = full.at(1 * 4 + 0) = full.at(1 * 4 + 1) = 1.0;
  full.at(0 * 4 + 2) = full.at(1 * 4 + 3) = 1.0;
  Tensor ds = downsample_mask(full, 2);
  CHECK(ds.shape() == std::vector<size_t>{1, 2, 2});
  CHECK(ds.at(0) == 1.0);  // 4/4
  CHECK(ds.at(1) == 1.0);  // 2/4 ties upward
  CHECK(ds.at(2) == 0.0);
  CHECK(ds.at(3) == 0.0);

  SyntheticVideo v;
  v.frames = Tensor({2, 2, 4, 4});
  Tensor only_frame0({2, 4, 4});
  for (size_t px = 0; px < 16; ++px) only_frame0.at(px) = 1.0;
  Tensor only_frame1({2, 4, 4});
  for (size_t px = 0; px < 16; ++px) only_frame1.at(16 + px) = 1.0;
  v.instance_masks = {only_frame0, only_frame1};
  v.class_ids = {0, 1};
  v.track_ids = {0, 1};
  GroundTruthClip gt = clip_ground_truth(v, {0}, 2, 4);
  REQUIRE(gt.instances.size() == 1);  // the frame-1 instance is absent
  CHECK(gt.instances[0].class_id == 0);
  gt.validate();
}

TEST_CASE("dataset save/load round-trips exactly") {
  namespace fs = std::filesystem;
  WorldConfig cfg = small_world();
  cfg.videos_train = 2;
  Dataset ds = generate(cfg, Split::kTrain);
  fs::path dir = fs::temp_directory_path() / "ovvis_dataset_test";
  fs::remove_all(dir);
  save_dataset(ds, dir.string());
  Dataset back = load_dataset(dir.string());
  CHECK(back.videos.size() == ds.videos.size());
  CHECK(back.prototypes.values() == ds.prototypes.values());
  CHECK(back.category_names == ds.category_names);
  CHECK(back.cfg.seed == cfg.seed);
  for (size_t i = 0; i < ds.videos.size(); ++i) {
    CHECK(back.videos[i].frames.values() == ds.videos[i].frames.values());
    CHECK(back.videos[i].class_ids == ds.videos[i].class_ids);
    REQUIRE(back.videos[i].instance_masks.size() == ds.videos[i].instance_masks.size());
    for (size_t m = 0; m < ds.videos[i].instance_masks.size(); ++m) {
      CHECK(back.videos[i].instance_masks[m].values() ==
            ds.videos[i].instance_masks[m].values());
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("make_clip gathers the requested frames") {
  WorldConfig cfg = small_world();
  Dataset ds = generate(cfg, Split::kTrain);
  const auto& v = ds.videos[0];
  VideoClip clip = make_clip(v, {1, 4}, 3);
  CHECK(clip.frames.dim(0) == 2);
  CHECK(clip.clip_index == 3);
  const size_t frame_numel = v.frames.numel() / v.num_frames();
  for (size_t i = 0; i < frame_numel; ++i) {
    CHECK(clip.frames.at(i) == v.frames.at(1 * frame_numel + i));
    CHECK(clip.frames.at(frame_numel + i) == v.frames.at(4 * frame_numel + i));
  }
}
