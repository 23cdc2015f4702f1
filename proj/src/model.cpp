#include "ovvis/model.hpp"

namespace ovvis {

QueryGeneratorConfig ModelConfig::query_generator() const {
  QueryGeneratorConfig q;
  q.in_channels = in_channels;
  q.stem_channels = stem_channels;
  q.channels = channels;
  q.num_queries = num_queries;
  q.layers = layers;
  q.heads = heads;
  q.activation = activation_from_string(activation);
  return q;
}

AlignmentConfig ModelConfig::alignment() const {
  AlignmentConfig a;
  a.channels = channels;
  a.embed_dim = embed_dim;
  a.heads = heads;
  a.activation = activation_from_string(activation);
  return a;
}

HeadsConfig ModelConfig::heads_config() const {
  HeadsConfig h;
  h.channels = channels;
  h.logit_scale = logit_scale;
  h.normalize_cls_embeddings = normalize_cls_embeddings;
  h.activation = activation_from_string(activation);
  return h;
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.channels % 4 != 0) {
    throw ConfigError("model channels must be divisible by 4 for the positional encoding");
  }
  register_query_generator_params(params_, cfg_.query_generator(), seed);
  register_alignment_params(params_, cfg_.alignment(), seed);
  register_heads_params(params_, cfg_.heads_config(), seed);
}

EncodedClip Model::encode_clip(Tape& t, const VideoClip& clip) const {
  return encode(t, clip, params_, cfg_.query_generator());
}

InstanceQuerySet Model::decode_clip(Tape& t, const EncodedClip& enc, int clip_index) const {
  const Tensor& f = enc.features;
  PositionalEncoding pos =
      make_positional_encoding(f.dim(0), f.dim(1), f.dim(2), f.dim(3));
  return decode(t, enc, pos, params_.at("decoder.query_init"), params_,
                cfg_.query_generator(), clip_index);
}

ClipPrediction Model::forward(Tape& t, const VideoClip& clip,
                              const ClipImageEmbeddings& image,
                              const TextEmbeddings& text) const {
  ClipPrediction out;
  EncodedClip enc = encode_clip(t, clip);
  out.queries = decode_clip(t, enc, clip.clip_index);

  const AlignmentConfig acfg = cfg_.alignment();
  Tensor projected = project_queries(t, out.queries.queries, params_, acfg);
  if (cfg_.uea_enabled) {
    ClassEmbeddings aligned =
        align(t, projected, image, params_, acfg, clip.clip_index, &out.uea_attention);
    out.e_cls = aligned.embeddings;
  } else {
    out.e_cls = projected;
  }

  const HeadsConfig hcfg = cfg_.heads_config();
  out.s_cls = classify(t, ClassEmbeddings{out.e_cls, clip.clip_index}, text, hcfg).scores;
  out.s_ins = instance_head(t, out.queries.queries, params_, hcfg).scores;
  out.masks = mask_head(t, out.queries.queries, enc.pixel_embeddings, params_, hcfg).masks;
  return out;
}

}  // namespace ovvis
