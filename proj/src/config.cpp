#include "ovvis/config.hpp"

#include <fstream>

namespace ovvis {

void ExperimentConfig::validate() const {
  world.validate();
  if (model.embed_dim != world.embed_dim) {
    throw ConfigError("model.embed_dim (" + std::to_string(model.embed_dim) +
                      ") must equal world.embed_dim (" + std::to_string(world.embed_dim) + ")");
  }
  if (model.in_channels != world.embed_dim) {
    throw ConfigError("model.in_channels must equal world.embed_dim (pixels carry the "
                      "signature channels)");
  }
  if (model.channels % 4 != 0) {
    throw ConfigError("model.channels must be divisible by 4");
  }
  if (model.num_queries == 0) throw ConfigError("model.num_queries must be positive");
  if (world.height % kStemStride != 0 || world.width % kStemStride != 0) {
    throw ConfigError("world grid must be divisible by the stem stride " +
                      std::to_string(kStemStride));
  }
  if (train.clip_len == 0 || train.clip_len > world.frames_per_video) {
    throw ConfigError("train.clip_len must be in [1, frames_per_video]");
  }
  if (train.batch == 0 || train.steps > 10'000'000) {
    throw ConfigError("train.batch/steps out of range");
  }
  if (train.lambda_ins < 0 || train.lambda_cls < 0 || train.lambda_mask < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  scheme_from_string(infer.scheme);
  if (infer.scheme == "semi_online" && infer.clip_len == 0) {
    throw ConfigError("infer.clip_len must be positive for semi_online");
  }
  activation_from_string(model.activation);
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"num_queries", cfg.num_queries},
                     {"channels", cfg.channels},
                     {"embed_dim", cfg.embed_dim},
                     {"in_channels", cfg.in_channels},
                     {"stem_channels", cfg.stem_channels},
                     {"layers", cfg.layers},
                     {"heads", cfg.heads},
                     {"activation", cfg.activation},
                     {"uea_enabled", cfg.uea_enabled},
                     {"normalize_cls_embeddings", cfg.normalize_cls_embeddings},
                     {"all_class_bce", cfg.all_class_bce},
                     {"logit_scale", cfg.logit_scale}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  ModelConfig d;
  cfg.num_queries = j.value("num_queries", d.num_queries);
  cfg.channels = j.value("channels", d.channels);
  cfg.embed_dim = j.value("embed_dim", d.embed_dim);
  cfg.in_channels = j.value("in_channels", d.in_channels);
  cfg.stem_channels = j.value("stem_channels", d.stem_channels);
  cfg.layers = j.value("layers", d.layers);
  cfg.heads = j.value("heads", d.heads);
  cfg.activation = j.value("activation", d.activation);
  cfg.uea_enabled = j.value("uea_enabled", d.uea_enabled);
  cfg.normalize_cls_embeddings = j.value("normalize_cls_embeddings", d.normalize_cls_embeddings);
  cfg.all_class_bce = j.value("all_class_bce", d.all_class_bce);
  cfg.logit_scale = j.value("logit_scale", d.logit_scale);
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"steps", cfg.steps},
                     {"batch", cfg.batch},
                     {"lr", cfg.lr},
                     {"weight_decay", cfg.weight_decay},
                     {"lambda_ins", cfg.lambda_ins},
                     {"lambda_cls", cfg.lambda_cls},
                     {"lambda_mask", cfg.lambda_mask},
                     {"seed", cfg.seed},
                     {"clip_len", cfg.clip_len}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  TrainConfig d;
  cfg.steps = j.value("steps", d.steps);
  cfg.batch = j.value("batch", d.batch);
  cfg.lr = j.value("lr", d.lr);
  cfg.weight_decay = j.value("weight_decay", d.weight_decay);
  cfg.lambda_ins = j.value("lambda_ins", d.lambda_ins);
  cfg.lambda_cls = j.value("lambda_cls", d.lambda_cls);
  cfg.lambda_mask = j.value("lambda_mask", d.lambda_mask);
  cfg.seed = j.value("seed", d.seed);
  cfg.clip_len = j.value("clip_len", d.clip_len);
}

void to_json(nlohmann::json& j, const InferConfig& cfg) {
  j = nlohmann::json{{"scheme", cfg.scheme},
                     {"clip_len", cfg.clip_len},
                     {"theta_keep", cfg.theta_keep},
                     {"theta_new", cfg.theta_new},
                     {"patience", cfg.patience},
                     {"ema", cfg.ema}};
}

void from_json(const nlohmann::json& j, InferConfig& cfg) {
  InferConfig d;
  cfg.scheme = j.value("scheme", d.scheme);
  cfg.clip_len = j.value("clip_len", d.clip_len);
  cfg.theta_keep = j.value("theta_keep", d.theta_keep);
  cfg.theta_new = j.value("theta_new", d.theta_new);
  cfg.patience = j.value("patience", d.patience);
  cfg.ema = j.value("ema", d.ema);
}

void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
  j = nlohmann::json{{"world", cfg.world},
                     {"model", cfg.model},
                     {"train", cfg.train},
                     {"infer", cfg.infer},
                     {"out_dir", cfg.out_dir}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  ExperimentConfig d;
  cfg.world = j.value("world", d.world);
  cfg.model = j.value("model", d.model);
  cfg.train = j.value("train", d.train);
  cfg.infer = j.value("infer", d.infer);
  cfg.out_dir = j.value("out_dir", d.out_dir);
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value, got: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // plain string
  }
  nlohmann::json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace ovvis
