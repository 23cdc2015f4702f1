#pragma once
// Experiment configuration: defaults < config file < --set overrides. The
// effective config is serialized into every output the driver writes.

#include <json.hpp>
#include <string>

#include "ovvis/model.hpp"
#include "ovvis/synthetic_world.hpp"
#include "ovvis/tracker.hpp"

namespace ovvis {

struct TrainConfig {
  size_t steps = 2000;
  size_t batch = 4;
  double lr = 5e-4;
  double weight_decay = 0.0;
  double lambda_ins = 2.0;
  double lambda_cls = 2.0;
  double lambda_mask = 5.0;
  uint64_t seed = 7;
  size_t clip_len = 2;  // frames sampled per training clip

  LossWeights loss_weights() const { return {lambda_ins, lambda_cls, lambda_mask}; }
};

struct InferConfig {
  std::string scheme = "semi_online";
  size_t clip_len = 5;
  double theta_keep = 0.3;
  double theta_new = 0.2;
  int patience = 1;
  double ema = 0.0;

  TrackerConfig tracker() const { return {theta_keep, theta_new, patience, ema}; }
};

struct ExperimentConfig {
  WorldConfig world;
  ModelConfig model;
  TrainConfig train;
  InferConfig infer;
  std::string out_dir = "out";

  // Cross-field consistency (provider dims vs model dims, scheme names).
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
void to_json(nlohmann::json& j, const InferConfig& cfg);
void from_json(const nlohmann::json& j, InferConfig& cfg);
void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);

// Applies one dotted-path override, e.g. "model.uea_enabled=false" or
// "train.lr=5e-4". Values parse as JSON when possible, else as strings.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace ovvis
