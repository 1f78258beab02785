#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polishfb/dmp.hpp"
#include "polishfb/episode.hpp"
#include "polishfb/feedback_net.hpp"
#include "polishfb/sim.hpp"

namespace polishfb {

/// One perturbed execution of the skill, optionally with shifted path
/// endpoints (endpoint variation gets its own nominal twin).
struct EpisodeSpec {
  std::string name;
  EnvPerturbation perturbation;
  Vec3 start_shift = Vec3::Zero();
  Vec3 goal_shift = Vec3::Zero();

  bool has_endpoint_shift() const {
    return start_shift.norm() > 0.0 || goal_shift.norm() > 0.0;
  }
};

/// Force-tracking correction loop settings (iterative reference-depth
/// adjustment until the desired force profile is met).
struct CorrectionConfig {
  double rmse_tolerance = 0.45; ///< N
  int max_iterations = 60;
  double gain = 0.8;
};

/// Declarative recipe for one dataset: the demonstrated sweep, the
/// environment, and the perturbed episodes to execute.
struct DatasetConfig {
  std::string name = "dataset";
  std::uint64_t seed = 1;
  double dt = 0.02;
  double duration = 16.0;          ///< s
  Vec3 sweep_start = Vec3::Zero(); ///< on-surface tangent coordinates, m
  Vec3 sweep_end = Vec3(0.12, 0.0, 0.0);
  double force_base = 22.5;        ///< N, commanded normal force
  double force_amplitude = 1.5;    ///< N
  double force_period = 8.0;       ///< s
  double approach_time = 2.0;      ///< s, free-space descent before contact
  double retract_time = 2.0;       ///< s, free-space ascent after the pass
  double clearance = 0.004;        ///< m, hover height outside contact
  int basis_count = 25;
  EnvConfig env;                   ///< nominal environment
  CorrectionConfig correction;
  std::vector<EpisodeSpec> episodes;
};

DatasetConfig load_dataset_config(const std::filesystem::path& path);
void save_dataset_config(const std::filesystem::path& path, const DatasetConfig& cfg);

/// Index of everything a dataset run produced.
struct DatasetManifest {
  std::string name;
  std::uint64_t seed = 1;
  double dt = 0.02;
  double duration = 0.0;
  std::string skill_file;
  std::string nominal_episode;
  struct Entry {
    std::string name;
    std::string perturbed_file;
    std::string nominal_file;
    std::string corrected_file;
    std::string pairs_file;
  };
  std::vector<Entry> episodes;
};

void save_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& dir);

/// Commanded reference path of the demonstration: a smooth sweep between
/// the endpoints pressed below the surface so that impedance tracking
/// realizes the commanded force profile.
std::vector<Vec3> build_demo_reference(const DatasetConfig& cfg);

/// Executes the nominal and perturbed episodes and writes one episode CSV
/// per execution plus the manifest (corrections and pairs are added by
/// generate_dataset). Requires at least one perturbed episode.
DatasetManifest record_dataset(const SkillModel& skill, const DatasetConfig& cfg,
                               const std::filesystem::path& out_dir);

/// Iterative force-tracking correction: re-runs the perturbed environment
/// with a depth-adjusted reference until the desired normal-force profile
/// is met within the configured RMSE. Returns the corrected execution.
EpisodeRecord correct_episode(const std::vector<Vec3>& nominal_reference,
                              const UnitQuaternion& orientation,
                              const std::vector<double>& desired_normal_force,
                              const EnvConfig& perturbed_env, double dt,
                              const Vec3& correction_axis,
                              const CorrectionConfig& cfg);

/// Demonstration -> skill fit -> episode recording -> corrections ->
/// training pairs. The one-stop dataset builder behind `demo`.
DatasetManifest generate_dataset(const DatasetConfig& cfg,
                                 const std::filesystem::path& out_dir);

/// Aligns a (nominal, perturbed, corrected) episode triple into one
/// training sequence: dF from the force channels, the phase grid from the
/// shared episode clock, and the correction target as the forcing-term
/// difference of the DMPs fitted to the nominal and corrected paths.
TrainingSequence build_training_pairs(const EpisodeRecord& nominal,
                                      const EpisodeRecord& perturbed,
                                      const EpisodeRecord& corrected,
                                      int basis_count);

void write_pairs_csv(const std::filesystem::path& path, const TrainingSequence& seq);
TrainingSequence read_pairs_csv(const std::filesystem::path& path);

/// Loads every pairs file listed in the dataset manifest under `dir`.
TrainingPairs load_training_pairs(const std::filesystem::path& dir);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& curve);

/// Training configuration file; omitted fields keep their defaults.
TrainConfig load_train_config(const std::filesystem::path& path);

/// Trains both models under an identical configuration and seed.
struct CompareOutcome {
  Checkpoint pmdrnn_ckpt;
  Checkpoint pmnn_ckpt;
  TrainResult pmdrnn_result;
  TrainResult pmnn_result;
};
CompareOutcome compare_models(const TrainingPairs& pairs, const TrainConfig& cfg);

/// Report files: report.json (with the hardware-study reference errors in
/// the header), per-model loss CSVs and a loss-vs-epoch SVG.
void write_compare_report(const std::filesystem::path& out_dir,
                          const CompareOutcome& outcome, const TrainConfig& cfg);

/// Closed-loop evaluation scenario: which perturbation to face and the
/// prefix window used for the early-phase metric.
struct ScenarioConfig {
  std::string name = "scenario";
  EnvPerturbation perturbation;
  double prefix_window = 12.5; ///< s
};
ScenarioConfig load_scenario_config(const std::filesystem::path& path);
void save_scenario_config(const std::filesystem::path& path, const ScenarioConfig& cfg);

struct RolloutEval {
  std::string label;
  double rmse_full = 0.0;
  double rmse_prefix = 0.0;
  EpisodeRecord episode;
};

struct ClosedLoopReport {
  double prefix_window = 12.5;
  std::vector<RolloutEval> rows; ///< row 0 is always the no-feedback baseline
};

/// Runs the skill against the scenario environment without feedback and
/// once per supplied model, measuring normal-force tracking RMSE against
/// the nominal episode's force profile over the full horizon and the
/// prefix window.
ClosedLoopReport evaluate_closed_loop(
    const SkillModel& skill, const EpisodeRecord& nominal_episode,
    const EnvConfig& nominal_env, const ScenarioConfig& scenario,
    const std::vector<std::pair<std::string, Checkpoint>>& models, double dt);

/// Report files: report.json (with the hardware-study reference RMSEs in
/// the header) and a force-vs-time SVG with the desired band overlay.
void write_closed_loop_report(const std::filesystem::path& out_dir,
                              const ClosedLoopReport& report,
                              const EpisodeRecord& nominal_episode,
                              const Vec3& surface_normal);

/// End-of-run metadata, written atomically; every executed command emits
/// one into its output directory.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json resolved_config;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
};
void write_run_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest);

} // namespace polishfb
