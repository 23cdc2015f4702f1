#pragma once
// Procedural video world: moving rectangles/ellipses whose pixels carry a
// per-category signature v_k = A.p_k, where p_k are near-orthogonal unit
// prototypes (the "text" space) and A is a hidden orthogonal transform
// (identity or a fixed random rotation). The image-embedding provider works
// in prototype space, which is what alignment has to bridge.

#include <json.hpp>

#include "ovvis/assignment.hpp"
#include "ovvis/embedding_alignment.hpp"
#include "ovvis/heads.hpp"
#include "ovvis/query_generator.hpp"
#include "ovvis/tensor.hpp"

namespace ovvis {

struct WorldConfig {
  size_t categories = 12;  // K
  size_t embed_dim = 8;    // C', also the pixel channel count
  size_t height = 32;
  size_t width = 32;
  size_t frames_per_video = 20;
  size_t instances_min = 1;
  size_t instances_max = 1;
  double speed = 1.5;
  double noise_sigma = 0.05;
  double base_ratio = 2.0 / 3.0;  // fraction of categories seen in training
  std::string domain_gap = "hidden_rotation";  // or "identity"
  uint64_t seed = 1234;
  size_t videos_train = 24;
  size_t videos_val = 24;

  size_t num_novel() const;
  size_t num_base() const { return categories - num_novel(); }
  void validate() const;
};

void to_json(nlohmann::json& j, const WorldConfig& cfg);
void from_json(const nlohmann::json& j, WorldConfig& cfg);

struct SyntheticVideo {
  int index = 0;
  uint64_t seed = 0;
  Tensor frames;  // T x Cin x H x W
  std::vector<Tensor> instance_masks;  // per instance: T x H x W, {0,1}, disjoint per frame
  std::vector<int> class_ids;
  std::vector<int> track_ids;

  size_t num_frames() const { return frames.defined() ? frames.dim(0) : 0; }
};

enum class Split { kTrain, kVal };

struct Dataset {
  WorldConfig cfg;
  Split split = Split::kTrain;
  std::vector<std::string> category_names;
  std::vector<bool> novel_flags;
  Tensor prototypes;        // K x C', unit rows, pairwise |dot| < 0.3
  Tensor hidden_transform;  // C' x C', orthogonal
  std::vector<SyntheticVideo> videos;
};

// Categories and the hidden transform are shared between splits; they depend
// only on the config.
struct WorldCategories {
  std::vector<std::string> names;
  std::vector<bool> novel_flags;
  Tensor prototypes;
  Tensor hidden_transform;
};
WorldCategories make_categories(const WorldConfig& cfg);

// Train videos draw only base categories; val videos draw all categories
// with the first instance stratified so every category appears.
Dataset generate(const WorldConfig& cfg, Split split);

// Per-frame embeddings in prototype space: normalized area-weighted sums of
// the visible instances' prototypes plus noise. Empty frames come out as
// all-zero rows (exempt from the unit-norm contract).
ClipImageEmbeddings clip_image_provider(const SyntheticVideo& video,
                                        const Tensor& prototypes,
                                        const WorldConfig& cfg);

TextEmbeddings text_provider(const WorldCategories& categories);
TextEmbeddings text_provider(const Dataset& ds);

// Majority-downsamples a T x H x W {0,1} mask stack by an integer factor.
Tensor downsample_mask(const Tensor& full, size_t stride);

// Ground truth for a frame subset at the model's mask stride; instances with
// no visible pixel in the subset are dropped.
GroundTruthClip clip_ground_truth(const SyntheticVideo& video,
                                  const std::vector<int>& frame_indices,
                                  size_t stride, size_t num_categories);

VideoClip make_clip(const SyntheticVideo& video, const std::vector<int>& frame_indices,
                    int clip_index);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace ovvis
