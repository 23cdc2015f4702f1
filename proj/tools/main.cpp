// ovvis: open-vocabulary video instance segmentation on a synthetic world.
// Subcommands: gen-data, train, infer, eval, sweep, selftest.
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 fixture mismatch.

#include <CLI11.hpp>
#include <iostream>

#include "ovvis/experiment.hpp"

using namespace ovvis;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  bool has_seed = false;
  uint64_t seed = 0;
  std::string out_dir;
};

ExperimentConfig build_config(const GlobalArgs& args) {
  nlohmann::json j = nlohmann::json(ExperimentConfig{});
  if (!args.config_path.empty()) {
    // Parse for early errors, then merge file values over the defaults.
    std::ifstream is(args.config_path);
    if (!is) throw ConfigError("cannot open config file: " + args.config_path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config parse error in " + args.config_path + ": " + e.what());
    }
    j.merge_patch(file);
  }
  for (const std::string& o : args.overrides) apply_override(j, o);
  ExperimentConfig cfg;
  try {
    cfg = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (args.has_seed) {
    cfg.world.seed = args.seed;
    cfg.train.seed = args.seed;
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  cfg.validate();
  return cfg;
}

void add_global_options(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.overrides,
                  "Dotted-path override, e.g. model.uea_enabled=false (repeatable)");
  cmd->add_option("--seed", args.seed, "Master seed (sets world.seed and train.seed)")
      ->each([&args](const std::string&) { args.has_seed = true; });
  cmd->add_option("--out", args.out_dir, "Output directory (default from config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"open-vocabulary video instance segmentation on a synthetic world"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::string data_dir, checkpoint_dir, results_dir, axis, fixtures;
  std::vector<int> video_ids;
  std::vector<std::string> sweep_values;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate train/val datasets");
  add_global_options(gen, args);

  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_global_options(train, args);
  train->add_option("--data", data_dir, "Dataset directory from gen-data (else in-memory)");

  CLI::App* infer = app.add_subcommand("infer", "Run inference over the val split");
  add_global_options(infer, args);
  infer->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
  infer->add_option("--data", data_dir, "Dataset directory (else in-memory)");
  infer->add_option("--videos", video_ids, "Video indices (default: all)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate inference results");
  add_global_options(eval, args);
  eval->add_option("--data", data_dir, "Dataset directory (else in-memory)");
  eval->add_option("--results", results_dir, "Directory of result JSON files")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Ablation sweep over one axis");
  add_global_options(sweep, args);
  sweep->add_option("--axis", axis, "uea_enabled | clip_len | scheme")->required();
  sweep->add_option("--values", sweep_values, "Values for the axis")->required();

  CLI::App* selftest = app.add_subcommand(
      "selftest", "Run the assignment oracle, gradient checks and evaluator fixtures");
  selftest->add_option("--fixtures", fixtures, "Fixture JSON path")
      ->default_val("tests/fixtures/eval_fixtures.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (selftest->parsed()) {
      return run_selftest(fixtures, std::cout);
    }
    ExperimentConfig cfg = build_config(args);
    const std::string out = cfg.out_dir;
    if (gen->parsed()) {
      run_gen_data(cfg, out);
    } else if (train->parsed()) {
      run_train(cfg, data_dir, out);
    } else if (infer->parsed()) {
      run_infer(cfg, checkpoint_dir, data_dir, out, video_ids);
    } else if (eval->parsed()) {
      EvalReport report = run_eval(cfg, data_dir, results_dir, out);
      std::printf("mAP %.4f  mAP_b %.4f  mAP_n %.4f  id_switches %d  id_consistency %.4f\n",
                  report.map, report.map_base, report.map_novel, report.id_switches,
                  report.id_consistency);
    } else if (sweep->parsed()) {
      run_sweep(cfg, axis, sweep_values, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const FixtureError& e) {
    std::cerr << "fixture mismatch: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
