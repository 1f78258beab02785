#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "polishfb/episode.hpp"
#include "polishfb/phase.hpp"
#include "polishfb/quaternion.hpp"
#include "polishfb/rbf.hpp"
#include "polishfb/types.hpp"

namespace polishfb {

/// Second-order attractor toward a goal position with a phase-driven
/// forcing term; beta is tied to alpha/4 (critically damped).
struct PositionDmp {
  double alpha = 25.0;
  double tau = 1.0;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  RbfBasis basis;
  MatX weights; // basis count x 3

  double beta() const { return alpha / 4.0; }
};

/// Orientation counterpart, integrated in goal-relative error coordinates
/// e = 2 log(q_goal * conj(q)). The constant drive term
/// 2 log(q_goal * conj(q_start)) enters the dynamics additively.
struct OrientationDmp {
  double alpha = 25.0;
  double tau = 1.0;
  UnitQuaternion q_start;
  UnitQuaternion q_goal;
  RbfBasis basis;
  MatX weights; // basis count x 3

  double beta() const { return alpha / 4.0; }
  Vec3 start_offset() const { return orientation_error(q_goal, q_start); }
};

/// Paired position + orientation skill.
struct SkillModel {
  PositionDmp position;
  OrientationDmp orientation;
};

/// Integration state: position p, scaled velocity z, orientation q and
/// scaled error rate r. All components must stay finite.
struct DmpState {
  Vec3 p = Vec3::Zero();
  Vec3 z = Vec3::Zero();
  UnitQuaternion q;
  Vec3 r = Vec3::Zero();

  static DmpState start_of(const SkillModel& skill);
};

/// Additive feedback correction, in forcing-term units. Zero when
/// feedback is disabled.
struct CouplingTerm {
  Vec3 position = Vec3::Zero();
  Vec3 orientation = Vec3::Zero();
};

/// The three modulation pathways of the transformation system. The
/// coupling term is the live pathway; the forcing-weight offset and the
/// raw action-space bias exist as hooks for experiments and stay zero in
/// normal operation.
struct Modulation {
  CouplingTerm coupling;
  Vec3 action_bias = Vec3::Zero();
  const MatX* forcing_weight_offset = nullptr; // same shape as weights
};

/// Forcing term f(s) = (sum_i w_i psi_i(s) / sum_i psi_i(s)) * s.
Vec3 forcing_term(const PositionDmp& dmp, double s, const MatX* weight_offset = nullptr);
Vec3 forcing_term(const OrientationDmp& dmp, double s);

/// One explicit-Euler step of both transformation systems at phase ph.s.
DmpState skill_step(const SkillModel& skill, const DmpState& state,
                    const PhaseState& ph, const Modulation& mod, double dt);

/// Fits forcing-term weights so that a rollout reproduces the demo.
/// Targets are obtained by inverting the transformation system with the
/// integrator-consistent forward-difference scheme; weights come from a
/// ridge least-squares solve over the normalized basis features.
PositionDmp fit_position_dmp(const EpisodeRecord& demo, int basis_count = 25,
                             double alpha = 25.0);
OrientationDmp fit_orientation_dmp(const EpisodeRecord& demo, int basis_count = 25,
                                   double alpha = 25.0);

/// Per-step coupling source for closed-loop execution. Receives the
/// current wrench error (zero when no environment is attached) and the
/// live phase.
using CouplingProvider = std::function<CouplingTerm(const Vec6&, const PhaseState&)>;

/// Integrates the skill for `duration` seconds at step dt, applying the
/// provider's coupling each step (a null provider means no coupling).
/// The returned record carries the reference pose; wrench rows are zero.
EpisodeRecord rollout(const SkillModel& skill, const CouplingProvider& coupling,
                      double duration, double dt,
                      std::optional<DmpState> initial = std::nullopt);

/// Returns a copy of the skill with shifted endpoints (goal-change
/// generalization; forcing weights are reused unchanged).
SkillModel with_endpoints(const SkillModel& skill, const Vec3& start, const Vec3& goal);

/// Versioned JSON persistence; round-trips bit-exactly.
void save_skill(const std::filesystem::path& path, const SkillModel& skill);
SkillModel load_skill(const std::filesystem::path& path);

} // namespace polishfb
