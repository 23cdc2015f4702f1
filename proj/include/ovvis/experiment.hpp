#pragma once
// Experiment drivers behind the CLI subcommands: dataset generation,
// training, inference, evaluation, ablation sweeps and the selftest.
// Every run is a pure function of (config, seed, input files); outputs are
// byte-identical across reruns.

#include <ostream>

#include "ovvis/config.hpp"
#include "ovvis/evaluation.hpp"
#include "ovvis/train.hpp"

namespace ovvis {

TrackerInput model_tracker_input(const Model& model, const SyntheticVideo& video,
                                 const ClipImageEmbeddings& full_embeddings,
                                 const TextEmbeddings& vocab);

std::vector<VideoResult> infer_dataset(const Model& model, const Dataset& ds,
                                       const InferConfig& icfg,
                                       const std::vector<int>& video_ids = {});

EvalReport evaluate_results(const std::vector<VideoResult>& results, const Dataset& ds,
                            nlohmann::json config_echo);

struct ClsAccuracy {
  double base = 0.0;
  double novel = 0.0;
  size_t base_count = 0;
  size_t novel_count = 0;
};

// Fraction of Hungarian-matched queries whose argmax class equals the ground
// truth, split by base/novel ground-truth category.
ClsAccuracy matched_classification_accuracy(const Model& model, const Dataset& ds,
                                            size_t clip_len, const LossWeights& w);

// data_dir may be empty: datasets regenerate in memory from the config.
Dataset load_or_generate(const ExperimentConfig& cfg, const std::string& data_dir,
                         Split split);

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir);
void run_train(const ExperimentConfig& cfg, const std::string& data_dir,
               const std::string& out_dir);
void run_infer(const ExperimentConfig& cfg, const std::string& checkpoint_dir,
               const std::string& data_dir, const std::string& out_dir,
               const std::vector<int>& video_ids = {});
EvalReport run_eval(const ExperimentConfig& cfg, const std::string& data_dir,
                    const std::string& results_dir, const std::string& out_dir);
void run_sweep(const ExperimentConfig& cfg, const std::string& axis,
               const std::vector<std::string>& values, const std::string& out_dir);
int run_selftest(const std::string& fixture_path, std::ostream& out);

}  // namespace ovvis
