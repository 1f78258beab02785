#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "polishfb/phase.hpp"
#include "polishfb/rbf.hpp"
#include "polishfb/types.hpp"

namespace polishfb {

/// Contact wrench error, actual minus expected (force N, torque N m).
struct WrenchError {
  Vec6 value = Vec6::Zero();
};

/// Recurrent feedback model: tanh input layer over (dF, C_{t-1}, C_{t-2}),
/// a GRU, one sigmoid hidden layer, a phase-modulated layer gated by the
/// normalized phase basis times the phase velocity, and a linear output.
struct PmdrnnParams {
  int hidden = 20;
  int output_dim = 3;
  int phase_basis = 25;
  bool diagonal_recurrence = false; // ablation: constrain U_* to diagonal

  MatX w_force;              // hidden x 6
  MatX w_prev1, w_prev2;     // hidden x output_dim
  VecX b_input;              // hidden

  MatX w_reset, w_update, w_cand; // hidden x hidden
  MatX u_reset, u_update, u_cand; // hidden x hidden (recurrent)
  VecX b_reset, b_update, b_cand; // hidden

  MatX w_hidden;             // hidden x hidden
  VecX b_hidden;             // hidden

  MatX w_phase;              // phase_basis x hidden
  VecX b_phase;              // phase_basis

  MatX w_out;                // output_dim x phase_basis
  RbfBasis phase_rbf;

  static PmdrnnParams init(int hidden, int output_dim, int phase_basis,
                           std::uint64_t seed, bool diagonal_recurrence = false);
  void validate() const;
};

/// Feedforward baseline: three sigmoid hidden layers over dF alone, then
/// the same phase-modulated layer and linear output.
struct PmnnParams {
  int hidden = 20;
  int output_dim = 3;
  int phase_basis = 25;

  MatX w1, w2, w3;           // hidden x 6, hidden x hidden, hidden x hidden
  VecX b1, b2, b3;           // hidden
  MatX w_phase;              // phase_basis x hidden
  VecX b_phase;              // phase_basis
  MatX w_out;                // output_dim x phase_basis
  RbfBasis phase_rbf;

  static PmnnParams init(int hidden, int output_dim, int phase_basis,
                         std::uint64_t seed);
  void validate() const;
};

/// Recurrent context carried across steps: GRU hidden state plus the two
/// previous outputs. Zero at episode start.
struct FeedbackState {
  VecX h_gru;
  VecX c_prev1;
  VecX c_prev2;

  static FeedbackState zero(int hidden, int output_dim);
};

std::pair<VecX, FeedbackState> pmdrnn_forward(const PmdrnnParams& params,
                                              const WrenchError& df,
                                              const FeedbackState& state,
                                              const PhaseState& ph);

VecX pmnn_forward(const PmnnParams& params, const WrenchError& df,
                  const PhaseState& ph);

/// Sum of squared errors over a sequence.
double loss_ssr(const std::vector<VecX>& pred, const std::vector<VecX>& target);

/// One aligned training sequence: wrench errors, phase samples and the
/// forcing-correction targets, columns = time steps.
struct TrainingSequence {
  MatX wrench_error; // 6 x T
  VecX phase_s;      // T
  VecX phase_u;      // T
  MatX target;       // output_dim x T
};
using TrainingPairs = std::vector<TrainingSequence>;

/// Per-dimension standardization fitted on the training set. Inputs are
/// z-scored; targets are scaled by their RMS without centering so that a
/// zero network output stays a zero correction.
struct Normalizer {
  Vec6 input_mean = Vec6::Zero();
  Vec6 input_scale = Vec6::Ones();
  VecX target_scale;

  static Normalizer fit(const TrainingPairs& data, int output_dim);
  TrainingPairs apply(const TrainingPairs& data) const;
  Vec6 normalize_input(const Vec6& v) const;
  VecX denormalize_output(const VecX& c) const;
};

struct TrainConfig {
  double learning_rate = 0.02;
  int batch_size = 8;
  int epochs = 3000;
  std::uint64_t seed = 1;
  double clip_grad_norm = 0.0; // 0 disables clipping
  int hidden = 20;
  int output_dim = 3;
  int phase_basis = 25;
  bool diagonal_recurrence = false;
};

struct TrainResult {
  std::vector<double> loss_curve; // one entry per epoch, mean per-step SSR
  double final_loss = 0.0;        // post-training mean per-step SSR
};

/// Plain minibatch gradient descent with full-sequence backpropagation
/// through time. Expects normalized data; deterministic for a fixed seed.
TrainResult train(PmdrnnParams& params, const TrainingPairs& normalized,
                  const TrainConfig& cfg);
TrainResult train(PmnnParams& params, const TrainingPairs& normalized,
                  const TrainConfig& cfg);

/// Compares analytic gradients of the sequence SSR against central finite
/// differences over every parameter; returns the maximum relative error.
double grad_check(const PmdrnnParams& params, const TrainingSequence& seq, double eps);
double grad_check(const PmnnParams& params, const TrainingSequence& seq, double eps);

/// Synthetic sequence with bounded random inputs and targets over a valid
/// decaying phase grid; used by gradient checks and property tests.
TrainingSequence make_random_sequence(Eigen::Index steps, int output_dim,
                                      std::uint64_t seed);

enum class ModelKind { pmdrnn, pmnn };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// A trained model bundle: parameters, normalization and the config that
/// produced it.
struct Checkpoint {
  ModelKind kind = ModelKind::pmdrnn;
  PmdrnnParams pmdrnn;
  PmnnParams pmnn;
  Normalizer norm;
  TrainConfig cfg;
};

/// Fits the normalizer, initializes parameters from cfg.seed and trains.
std::pair<Checkpoint, TrainResult> train_model(ModelKind kind,
                                               const TrainingPairs& raw,
                                               const TrainConfig& cfg);

/// Versioned JSON persistence (weights row-major); round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Stateful closed-loop evaluator: folds the normalizer around the raw
/// network and carries the recurrent state across calls.
class FeedbackModel {
 public:
  explicit FeedbackModel(Checkpoint ckpt);

  /// Correction for the current wrench error, in forcing-term units.
  VecX correction(const Vec6& wrench_error, const PhaseState& ph);
  void reset();
  ModelKind kind() const { return ckpt_.kind; }

 private:
  Checkpoint ckpt_;
  FeedbackState state_;
};

} // namespace polishfb
