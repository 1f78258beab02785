#pragma once

#include <optional>
#include <vector>

#include "polishfb/dmp.hpp"
#include "polishfb/episode.hpp"
#include "polishfb/feedback_net.hpp"
#include "polishfb/types.hpp"

namespace polishfb {

/// Compliant point-contact model of the spinning felt wheel against the
/// workpiece. Contact area and wheel compliance are folded into the
/// normal stiffness.
struct ContactConfig {
  double normal_stiffness = 20000.0; ///< N/m
  double normal_damping = 50.0;      ///< N s/m, applied on approach only
  double friction = 0.3;             ///< sliding friction coefficient
  double spin_gain = 0.1;            ///< tangential force gain per krpm
  double spindle_rpm = 2000.0;
  double wheel_radius = 0.0125;      ///< m

  void validate() const;
};

/// Planar workpiece with an optional height-field perturbation sampled on
/// a regular grid over the surface tangent plane (bilinear interpolation,
/// clamped at the edges).
struct WorkpieceSurface {
  Vec3 origin = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  struct HeightField {
    double u0 = 0.0, v0 = 0.0; ///< grid origin in tangent coordinates, m
    double du = 0.01, dv = 0.01;
    MatX values;               ///< heights along the normal, m
  };
  std::optional<HeightField> height;

  void tangent_frame(Vec3& tu, Vec3& tv) const;
  double height_at(double u, double v) const;
  /// Distance from the (possibly height-perturbed) surface along the
  /// normal; negative inside the material.
  double signed_distance(const Vec3& point) const;
};

/// Rendered tool dynamics M x'' + D x' + K (x - x_ref) = F_ext, diagonal.
struct ImpedanceGains {
  Vec3 mass = Vec3(2.0, 2.0, 2.0);           ///< kg
  Vec3 damping = Vec3(120.0, 120.0, 120.0);  ///< N s/m
  Vec3 stiffness = Vec3(5000.0, 5000.0, 5000.0); ///< N/m

  void validate() const;
};

/// Environment change between the nominal and an executed episode.
struct EnvPerturbation {
  Vec3 offset = Vec3::Zero();     ///< workpiece translation, m
  Vec3 tilt_axis = Vec3::UnitX();
  double tilt_angle = 0.0;        ///< rad, |angle| < 0.2
  double stiffness_scale = 1.0;   ///< within [0.25, 4]

  void validate() const;
};

WorkpieceSurface apply_perturbation(const WorkpieceSurface& surface,
                                    const EnvPerturbation& pert);
ContactConfig apply_perturbation(const ContactConfig& contact,
                                 const EnvPerturbation& pert);

/// Wrench (force, torque) exerted by the surface on the tool. Zero out of
/// contact and continuous in the tool position.
Vec6 contact_force(const Vec3& position, const Vec3& velocity,
                   const WorkpieceSurface& surface, const ContactConfig& cfg);

struct ToolState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

/// One explicit-Euler step of the impedance-rendered tool.
ToolState impedance_step(const ImpedanceGains& gains, const Vec3& reference,
                         const Vec6& external_wrench, const ToolState& state,
                         double dt);

/// Full environment description for one episode.
struct EnvConfig {
  WorkpieceSurface surface;
  EnvPerturbation perturbation;
  ContactConfig contact;
  ImpedanceGains gains;
  int substeps = 20; ///< physics substeps per control tick

  WorkpieceSurface effective_surface() const {
    return apply_perturbation(surface, perturbation);
  }
  ContactConfig effective_contact() const {
    return apply_perturbation(contact, perturbation);
  }
};

/// Optional online correction: the feedback model plus the expected force
/// profile (one wrench per control tick) that defines the error input.
struct FeedbackHookup {
  FeedbackModel* model = nullptr;
  std::vector<Vec6> expected_force;
};

/// Executes the skill in the environment: the DMP reference is tracked by
/// the impedance-rendered tool, the contact wrench is measured each tick,
/// and (when a hookup is given) the feedback correction enters the DMP
/// step as the coupling term. Records {t, reference pose, wrench} at the
/// control rate. Aborts with a diagnostic if the state diverges.
EpisodeRecord run_episode(const SkillModel& skill, FeedbackHookup* feedback,
                          const EnvConfig& env, double duration, double dt);

/// Same physics loop driven by a precomputed reference path instead of a
/// skill model; used to record demonstrations and corrected executions.
EpisodeRecord run_scripted_episode(const std::vector<Vec3>& reference,
                                   const UnitQuaternion& orientation,
                                   const EnvConfig& env, double dt);

} // namespace polishfb
