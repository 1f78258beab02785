// polishfb command-line tool: dataset generation, feedback-model training,
// model comparison, closed-loop rollouts and gradient checks.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.
// POLISHFB_LOG={quiet,info,debug} controls verbosity.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "polishfb/feedback_net.hpp"
#include "polishfb/log.hpp"
#include "polishfb/pipeline.hpp"
#include "polishfb/version.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nlohmann::ordered_json read_json_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  nlohmann::ordered_json j;
  if (file) file >> j;
  return j;
}

struct DemoArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_demo(const DemoArgs& args) {
  const auto start = Clock::now();
  polishfb::DatasetConfig cfg = polishfb::load_dataset_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  const auto manifest = polishfb::generate_dataset(cfg, args.out);

  polishfb::RunManifest run;
  run.command = "demo";
  run.resolved_config = read_json_file(args.config);
  run.resolved_config["seed"] = cfg.seed;
  run.seed = cfg.seed;
  run.outputs = {"manifest.json", manifest.skill_file, manifest.nominal_episode};
  for (const auto& e : manifest.episodes) {
    run.outputs.push_back(e.perturbed_file);
    if (e.nominal_file != manifest.nominal_episode) run.outputs.push_back(e.nominal_file);
    run.outputs.push_back(e.corrected_file);
    run.outputs.push_back(e.pairs_file);
  }
  run.wall_seconds = seconds_since(start);
  polishfb::write_run_manifest(args.out, run);
  polishfb::log_info("dataset '%s' written to %s", manifest.name.c_str(),
                     args.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string pairs_dir;
  std::string model = "pmdrnn";
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int run_train(const TrainArgs& args) {
  const auto start = Clock::now();
  polishfb::TrainConfig cfg;
  if (!args.config.empty()) cfg = polishfb::load_train_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  if (args.epochs) cfg.epochs = *args.epochs;

  const auto kind = polishfb::model_kind_from_string(args.model);
  const auto pairs = polishfb::load_training_pairs(args.pairs_dir);
  auto [ckpt, result] = polishfb::train_model(kind, pairs, cfg);

  std::filesystem::create_directories(args.out);
  const std::string ckpt_file = args.model + ".ckpt.json";
  const std::string curve_file = "loss_" + args.model + ".csv";
  polishfb::save_checkpoint(std::filesystem::path(args.out) / ckpt_file, ckpt);
  polishfb::write_loss_csv(std::filesystem::path(args.out) / curve_file,
                           result.loss_curve);
  std::printf("%s final mean per-step SSR: %.6g\n", args.model.c_str(),
              result.final_loss);

  polishfb::RunManifest run;
  run.command = "train";
  run.resolved_config = {{"pairs", args.pairs_dir},
                         {"model", args.model},
                         {"learning_rate", cfg.learning_rate},
                         {"batch_size", cfg.batch_size},
                         {"epochs", cfg.epochs},
                         {"seed", cfg.seed},
                         {"clip_grad_norm", cfg.clip_grad_norm},
                         {"hidden", cfg.hidden},
                         {"output_dim", cfg.output_dim},
                         {"phase_basis", cfg.phase_basis},
                         {"diagonal_recurrence", cfg.diagonal_recurrence}};
  run.seed = cfg.seed;
  run.outputs = {ckpt_file, curve_file};
  run.wall_seconds = seconds_since(start);
  polishfb::write_run_manifest(args.out, run);
  return 0;
}

struct CompareArgs {
  std::string pairs_dir;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int run_compare(const CompareArgs& args) {
  const auto start = Clock::now();
  polishfb::TrainConfig cfg;
  if (!args.config.empty()) cfg = polishfb::load_train_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  if (args.epochs) cfg.epochs = *args.epochs;

  const auto pairs = polishfb::load_training_pairs(args.pairs_dir);
  const auto outcome = polishfb::compare_models(pairs, cfg);
  polishfb::write_compare_report(args.out, outcome, cfg);
  std::printf("pmdrnn final SSR %.6g | pmnn final SSR %.6g\n",
              outcome.pmdrnn_result.final_loss, outcome.pmnn_result.final_loss);

  polishfb::RunManifest run;
  run.command = "compare";
  run.resolved_config = {{"pairs", args.pairs_dir},
                         {"epochs", cfg.epochs},
                         {"seed", cfg.seed}};
  run.seed = cfg.seed;
  run.outputs = {"report.json", "loss_pmdrnn.csv", "loss_pmnn.csv",
                 "loss_curves.svg", "pmdrnn.ckpt.json", "pmnn.ckpt.json"};
  run.wall_seconds = seconds_since(start);
  polishfb::write_run_manifest(args.out, run);
  return 0;
}

struct RolloutArgs {
  std::string dataset_dir;
  std::string scenario;
  std::string out;
  std::vector<std::string> feedback;
};

int run_rollout(const RolloutArgs& args) {
  const auto start = Clock::now();
  const auto manifest = polishfb::load_manifest(args.dataset_dir);
  const auto skill = polishfb::load_skill(std::filesystem::path(args.dataset_dir) /
                                          manifest.skill_file);
  const auto nominal = polishfb::read_episode_csv(
      std::filesystem::path(args.dataset_dir) / manifest.nominal_episode);
  const auto scenario = polishfb::load_scenario_config(args.scenario);

  // reconstruct the environment the dataset was recorded in
  const auto dataset_cfg = polishfb::load_dataset_config(
      std::filesystem::path(args.dataset_dir) / "dataset_config.json");
  polishfb::EnvConfig env = dataset_cfg.env;
  env.perturbation = polishfb::EnvPerturbation{};

  std::vector<std::pair<std::string, polishfb::Checkpoint>> models;
  for (const auto& entry : args.feedback) {
    if (entry == "none") continue;
    auto ckpt = polishfb::load_checkpoint(entry);
    models.emplace_back(polishfb::to_string(ckpt.kind), std::move(ckpt));
  }

  const auto report = polishfb::evaluate_closed_loop(skill, nominal, env, scenario,
                                                     models, manifest.dt);
  polishfb::write_closed_loop_report(args.out, report, nominal,
                                     env.surface.normal);
  for (const auto& row : report.rows) {
    std::printf("%-12s rmse %.4g N (first %.3g s: %.4g N)\n", row.label.c_str(),
                row.rmse_full, report.prefix_window, row.rmse_prefix);
  }

  polishfb::RunManifest run;
  run.command = "rollout";
  run.resolved_config = {{"dataset", args.dataset_dir},
                         {"scenario", args.scenario},
                         {"feedback", args.feedback}};
  run.seed = manifest.seed;
  run.outputs = {"report.json", "force_tracking.svg"};
  for (const auto& row : report.rows) run.outputs.push_back("rollout_" + row.label + ".csv");
  run.wall_seconds = seconds_since(start);
  polishfb::write_run_manifest(args.out, run);
  return 0;
}

struct GradcheckArgs {
  std::string model = "pmdrnn";
  std::string out;
  double eps = 1e-6;
  std::uint64_t seed = 1;
  int steps = 8;
  int hidden = 6;
  int phase_basis = 8;
};

int run_gradcheck(const GradcheckArgs& args) {
  const auto start = Clock::now();
  const auto kind = polishfb::model_kind_from_string(args.model);
  const auto seq = polishfb::make_random_sequence(args.steps, 3, args.seed);
  double max_rel = 0.0;
  if (kind == polishfb::ModelKind::pmdrnn) {
    const auto params =
        polishfb::PmdrnnParams::init(args.hidden, 3, args.phase_basis, args.seed);
    max_rel = polishfb::grad_check(params, seq, args.eps);
  } else {
    const auto params =
        polishfb::PmnnParams::init(args.hidden, 3, args.phase_basis, args.seed);
    max_rel = polishfb::grad_check(params, seq, args.eps);
  }
  std::printf("%s max relative gradient error: %.3e\n", args.model.c_str(), max_rel);

  polishfb::RunManifest run;
  run.command = "gradcheck";
  run.resolved_config = {{"model", args.model}, {"eps", args.eps},
                         {"steps", args.steps}, {"hidden", args.hidden},
                         {"phase_basis", args.phase_basis}};
  run.seed = args.seed;
  run.wall_seconds = seconds_since(start);
  polishfb::write_run_manifest(args.out, run);
  return max_rel < 1e-5 ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"polishfb: contact-force feedback skill adaptation experiments"};
  app.set_version_flag("--version", polishfb::kVersion);
  app.require_subcommand(1);
  app.footer("Set POLISHFB_LOG={quiet,info,debug} to control log verbosity.");

  DemoArgs demo_args;
  auto* demo = app.add_subcommand(
      "demo", "Record a simulated demonstration dataset (episodes, corrections, pairs)");
  demo->add_option("--config", demo_args.config,
                   "dataset config JSON (env constants, episodes)")->required();
  demo->add_option("--out", demo_args.out, "output directory")->required();
  demo->add_option("--seed", demo_args.seed, "seed override (dimensionless)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a feedback model on recorded pairs");
  train->add_option("--pairs", train_args.pairs_dir,
                    "dataset directory with manifest.json and pairs files")->required();
  train->add_option("--model", train_args.model, "model kind: pmdrnn or pmnn")
      ->check(CLI::IsMember({"pmdrnn", "pmnn"}));
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--config", train_args.config, "training config JSON");
  train->add_option("--seed", train_args.seed, "seed override (dimensionless)");
  train->add_option("--epochs", train_args.epochs, "epoch-count override (epochs)");

  CompareArgs compare_args;
  auto* compare = app.add_subcommand(
      "compare", "Train both models under one config and report final losses");
  compare->add_option("--pairs", compare_args.pairs_dir,
                      "dataset directory with manifest.json and pairs files")->required();
  compare->add_option("--out", compare_args.out, "output directory")->required();
  compare->add_option("--config", compare_args.config, "training config JSON");
  compare->add_option("--seed", compare_args.seed, "seed override (dimensionless)");
  compare->add_option("--epochs", compare_args.epochs, "epoch-count override (epochs)");

  RolloutArgs rollout_args;
  auto* rollout = app.add_subcommand(
      "rollout", "Closed-loop force-tracking evaluation against a perturbed scenario");
  rollout->add_option("--dataset", rollout_args.dataset_dir,
                      "dataset directory from `demo`")->required();
  rollout->add_option("--scenario", rollout_args.scenario,
                      "scenario config JSON (perturbation, prefix window)")->required();
  rollout->add_option("--out", rollout_args.out, "output directory")->required();
  rollout->add_option("--feedback", rollout_args.feedback,
                      "checkpoint path or 'none'; repeatable")
      ->expected(-1);

  GradcheckArgs gradcheck_args;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Verify analytic BPTT gradients against finite differences");
  gradcheck->add_option("--model", gradcheck_args.model, "model kind: pmdrnn or pmnn")
      ->check(CLI::IsMember({"pmdrnn", "pmnn"}));
  gradcheck->add_option("--out", gradcheck_args.out, "output directory")->required();
  gradcheck->add_option("--eps", gradcheck_args.eps,
                        "finite-difference step (dimensionless, in [1e-7, 1e-4])");
  gradcheck->add_option("--seed", gradcheck_args.seed, "seed (dimensionless)");
  gradcheck->add_option("--steps", gradcheck_args.steps, "sequence length (steps)");
  gradcheck->add_option("--hidden", gradcheck_args.hidden, "hidden width (neurons)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (demo->parsed()) return run_demo(demo_args);
    if (train->parsed()) return run_train(train_args);
    if (compare->parsed()) return run_compare(compare_args);
    if (rollout->parsed()) return run_rollout(rollout_args);
    if (gradcheck->parsed()) return run_gradcheck(gradcheck_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
