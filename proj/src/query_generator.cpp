#include "ovvis/query_generator.hpp"

namespace ovvis {

namespace {

std::string layer_prefix(size_t l) {
  return "decoder.layer" + std::to_string(l) + ".";
}

Tensor attn_block(Tape& t, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                  const ParamStore& p, const std::string& prefix, size_t heads) {
  Tensor q = t.matmul(q_in, p.at(prefix + "wq"));
  Tensor k = t.matmul(k_in, p.at(prefix + "wk"));
  Tensor v = t.matmul(v_in, p.at(prefix + "wv"));
  AttentionResult a = scaled_dot_attention(t, q, k, v, heads);
  return t.matmul(a.out, p.at(prefix + "wo"));
}

}  // namespace

void register_query_generator_params(ParamStore& store,
                                     const QueryGeneratorConfig& cfg,
                                     uint64_t seed) {
  const size_t Ci = cfg.in_channels, Cm = cfg.stem_channels, C = cfg.channels;
  auto xavier = [&](const std::string& name, std::vector<size_t> shape,
                    size_t fi, size_t fo) {
    store.add(name, init_xavier(name, seed, std::move(shape), fi, fo));
  };
  xavier("stem.conv1.w", {Cm, Ci, 3, 3}, Ci * 9, Cm * 9);
  store.add("stem.conv1.b", Tensor::zeros({Cm}));
  xavier("stem.conv2.w", {C, Cm, 3, 3}, Cm * 9, C * 9);
  store.add("stem.conv2.b", Tensor::zeros({C}));
  xavier("stem.pixel_proj.w", {C, C}, C, C);
  store.add("stem.pixel_proj.b", Tensor::zeros({C}));

  store.add("decoder.query_init",
            init_normal("decoder.query_init", seed, {cfg.num_queries, C}, 0.02));
  for (size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    for (const char* blk : {"cross_attn.", "self_attn."}) {
      for (const char* w : {"wq", "wk", "wv", "wo"}) {
        xavier(pre + blk + w, {C, C}, C, C);
      }
    }
    for (const char* n : {"norm1.", "norm2.", "norm3."}) {
      store.add(pre + n + "gamma", Tensor::full({C}, 1.0));
      store.add(pre + n + "beta", Tensor::zeros({C}));
    }
    xavier(pre + "ffn.w1", {C, 4 * C}, C, 4 * C);
    store.add(pre + "ffn.b1", Tensor::zeros({4 * C}));
    xavier(pre + "ffn.w2", {4 * C, C}, 4 * C, C);
    store.add(pre + "ffn.b2", Tensor::zeros({C}));
  }
}

EncodedClip encode(Tape& t, const VideoClip& clip, const ParamStore& params,
                   const QueryGeneratorConfig& cfg) {
  const Tensor& x = clip.frames;
  if (x.rank() != 4 || x.dim(0) == 0) {
    throw ShapeError("encode: frames must be T x Cin x H x W, got " +
                     shape_str(x.shape()));
  }
  if (x.dim(1) != cfg.in_channels) {
    throw ConfigError("encode: expected " + std::to_string(cfg.in_channels) +
                      " input channels, got " + std::to_string(x.dim(1)));
  }
  if (x.dim(2) % kStemStride != 0 || x.dim(3) % kStemStride != 0) {
    throw ConfigError("encode: frame size " + std::to_string(x.dim(2)) + "x" +
                      std::to_string(x.dim(3)) + " not divisible by stride " +
                      std::to_string(kStemStride));
  }
  Tensor h1 = apply_activation(
      t, t.conv2d(x, params.at("stem.conv1.w"), params.at("stem.conv1.b"), 2, 1),
      cfg.activation);
  Tensor h2 = t.conv2d(h1, params.at("stem.conv2.w"), params.at("stem.conv2.b"), 2, 1);
  // h2: T x C x h x w -> features C x T x h x w
  Tensor features = t.permute(h2, {1, 0, 2, 3});
  const size_t C = features.dim(0), T = features.dim(1);
  const size_t h = features.dim(2), w = features.dim(3);
  Tensor tokens = t.reshape(t.permute(features, {1, 2, 3, 0}), {T * h * w, C});
  Tensor pixel_tok = linear(t, tokens, params.at("stem.pixel_proj.w"),
                            params.at("stem.pixel_proj.b"));
  Tensor pixel = t.permute(t.reshape(pixel_tok, {T, h, w, C}), {3, 0, 1, 2});
  EncodedClip out;
  out.features = features;
  out.pixel_embeddings = pixel;
  out.stride = kStemStride;
  return out;
}

InstanceQuerySet decode(Tape& t, const EncodedClip& encoded,
                        const PositionalEncoding& pos, const Tensor& init_queries,
                        const ParamStore& params, const QueryGeneratorConfig& cfg,
                        int clip_index) {
  const Tensor& f = encoded.features;
  if (pos.combined.shape() != f.shape()) {
    throw ShapeError("decode: positional encoding " + shape_str(pos.combined.shape()) +
                     " does not match features " + shape_str(f.shape()));
  }
  if (init_queries.rank() != 2 || init_queries.dim(1) != f.dim(0)) {
    throw ShapeError("decode: init queries " + shape_str(init_queries.shape()) +
                     " incompatible with channel count " + std::to_string(f.dim(0)));
  }
  InstanceQuerySet out;
  out.clip_index = clip_index;
  if (cfg.layers == 0) {
    out.queries = init_queries;
    return out;
  }
  const size_t C = f.dim(0), T = f.dim(1), h = f.dim(2), w = f.dim(3);
  Tensor tokens = t.reshape(t.permute(f, {1, 2, 3, 0}), {T * h * w, C});
  Tensor pos_tok = t.reshape(t.permute(pos.combined, {1, 2, 3, 0}), {T * h * w, C});
  Tensor keys_in = t.add(tokens, pos_tok);

  Tensor q = init_queries;
  for (size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    Tensor q_pos = t.add(q, init_queries);
    Tensor cross = attn_block(t, q_pos, keys_in, tokens, params, pre + "cross_attn.",
                              cfg.heads);
    q = t.layer_norm(t.add(q, cross), params.at(pre + "norm1.gamma"),
                     params.at(pre + "norm1.beta"));
    Tensor q_pos2 = t.add(q, init_queries);
    Tensor self = attn_block(t, q_pos2, q_pos2, q, params, pre + "self_attn.",
                             cfg.heads);
    q = t.layer_norm(t.add(q, self), params.at(pre + "norm2.gamma"),
                     params.at(pre + "norm2.beta"));
    Tensor hidden = apply_activation(
        t, linear(t, q, params.at(pre + "ffn.w1"), params.at(pre + "ffn.b1")),
        cfg.activation);
    Tensor ffn = linear(t, hidden, params.at(pre + "ffn.w2"), params.at(pre + "ffn.b2"));
    q = t.layer_norm(t.add(q, ffn), params.at(pre + "norm3.gamma"),
                     params.at(pre + "norm3.beta"));
  }
  out.queries = q;
  return out;
}

}  // namespace ovvis
