#pragma once
// The full clip model: encode -> decode -> (UEA ->) classify + objectness +
// masks. With UEA disabled the MLP-projected queries are classified against
// the text embeddings directly.

#include "ovvis/heads.hpp"
#include "ovvis/query_generator.hpp"

namespace ovvis {

struct ModelConfig {
  size_t num_queries = 20;   // N
  size_t channels = 64;      // C
  size_t embed_dim = 8;      // C'
  size_t in_channels = 8;    // Cin
  size_t stem_channels = 16;
  size_t layers = 3;         // L
  size_t heads = 1;
  std::string activation = "relu";
  bool uea_enabled = true;
  bool normalize_cls_embeddings = false;
  bool all_class_bce = false;
  double logit_scale = 1.0;

  QueryGeneratorConfig query_generator() const;
  AlignmentConfig alignment() const;
  HeadsConfig heads_config() const;
};

struct ClipPrediction {
  InstanceQuerySet queries;  // N x C
  Tensor e_cls;              // N x C'
  Tensor s_cls;              // N x K
  Tensor s_ins;              // N x 1
  Tensor masks;              // N x T x h x w
  Tensor uea_attention;      // weights when UEA ran, undefined otherwise
};

class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  EncodedClip encode_clip(Tape& t, const VideoClip& clip) const;
  InstanceQuerySet decode_clip(Tape& t, const EncodedClip& enc, int clip_index = 0) const;

  ClipPrediction forward(Tape& t, const VideoClip& clip,
                         const ClipImageEmbeddings& image,
                         const TextEmbeddings& text) const;

  void save_checkpoint(const std::string& dir) const { params_.save(dir); }
  void load_checkpoint(const std::string& dir) { params_.load(dir); }

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace ovvis
