#include "polishfb/sim.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <string>

namespace polishfb {

namespace {

constexpr double kSlidingEps = 1e-6;   // m/s, friction direction smoothing
constexpr double kDivergenceLimit = 10.0; // m
constexpr double kSettleTime = 1.0;    // s, pre-roll before recording starts

void check_finite_tool(const ToolState& st) {
  if (!st.position.allFinite() || !st.velocity.allFinite()) {
    throw std::invalid_argument("impedance_step: non-finite state");
  }
}

// Advances the tool through one control tick of physics substeps against
// a held reference.
ToolState advance_physics(const ImpedanceGains& gains, const Vec3& reference,
                          const WorkpieceSurface& surface, const ContactConfig& contact,
                          ToolState tool, double dt, int substeps) {
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) {
    const Vec6 wrench = contact_force(tool.position, tool.velocity, surface, contact);
    tool = impedance_step(gains, reference, wrench, tool, h);
  }
  return tool;
}

ToolState settled_tool(const Vec3& reference, const WorkpieceSurface& surface,
                       const ContactConfig& contact, const ImpedanceGains& gains,
                       double dt, int substeps) {
  ToolState tool;
  tool.position = reference;
  // start on the surface rather than inside it
  const double sd = surface.signed_distance(tool.position);
  if (sd < 0.0) tool.position -= sd * surface.normal;
  const int ticks = static_cast<int>(std::ceil(kSettleTime / dt));
  for (int k = 0; k < ticks; ++k) {
    tool = advance_physics(gains, reference, surface, contact, tool, dt, substeps);
  }
  return tool;
}

} // namespace

void ContactConfig::validate() const {
  if (!(normal_stiffness > 0.0) || normal_damping < 0.0 || friction < 0.0 ||
      !(wheel_radius > 0.0) || spindle_rpm < 0.0 || spin_gain < 0.0) {
    throw std::invalid_argument("ContactConfig: invalid parameters");
  }
}

void ImpedanceGains::validate() const {
  if (!(mass.minCoeff() > 0.0) || !(damping.minCoeff() > 0.0) ||
      !(stiffness.minCoeff() > 0.0)) {
    throw std::invalid_argument("ImpedanceGains: gains must be positive");
  }
}

void EnvPerturbation::validate() const {
  if (std::abs(tilt_angle) >= 0.2) {
    throw std::invalid_argument("EnvPerturbation: |tilt_angle| must be < 0.2 rad");
  }
  if (stiffness_scale < 0.25 || stiffness_scale > 4.0) {
    throw std::invalid_argument("EnvPerturbation: stiffness_scale outside [0.25, 4]");
  }
}

void WorkpieceSurface::tangent_frame(Vec3& tu, Vec3& tv) const {
  const Vec3 n = normal.normalized();
  const Vec3 seed = (std::abs(n.x()) < 0.9) ? Vec3::UnitX() : Vec3::UnitY();
  tu = (seed - seed.dot(n) * n).normalized();
  tv = n.cross(tu);
}

double WorkpieceSurface::height_at(double u, double v) const {
  if (!height) return 0.0;
  const auto& hf = *height;
  const Eigen::Index rows = hf.values.rows();
  const Eigen::Index cols = hf.values.cols();
  if (rows < 2 || cols < 2) return rows * cols > 0 ? hf.values(0, 0) : 0.0;
  double fu = (u - hf.u0) / hf.du;
  double fv = (v - hf.v0) / hf.dv;
  fu = std::clamp(fu, 0.0, static_cast<double>(rows - 1));
  fv = std::clamp(fv, 0.0, static_cast<double>(cols - 1));
  const auto i0 = static_cast<Eigen::Index>(std::min(std::floor(fu), double(rows - 2)));
  const auto j0 = static_cast<Eigen::Index>(std::min(std::floor(fv), double(cols - 2)));
  const double au = fu - static_cast<double>(i0);
  const double av = fv - static_cast<double>(j0);
  return (1 - au) * (1 - av) * hf.values(i0, j0) +
         au * (1 - av) * hf.values(i0 + 1, j0) +
         (1 - au) * av * hf.values(i0, j0 + 1) + au * av * hf.values(i0 + 1, j0 + 1);
}

double WorkpieceSurface::signed_distance(const Vec3& point) const {
  const Vec3 rel = point - origin;
  const Vec3 n = normal.normalized();
  if (!height) return rel.dot(n);
  Vec3 tu, tv;
  tangent_frame(tu, tv);
  return rel.dot(n) - height_at(rel.dot(tu), rel.dot(tv));
}

WorkpieceSurface apply_perturbation(const WorkpieceSurface& surface,
                                    const EnvPerturbation& pert) {
  pert.validate();
  WorkpieceSurface out = surface;
  out.origin += pert.offset;
  if (pert.tilt_angle != 0.0) {
    const Eigen::AngleAxisd rot(pert.tilt_angle, pert.tilt_axis.normalized());
    out.normal = (rot * surface.normal).normalized();
  }
  return out;
}

ContactConfig apply_perturbation(const ContactConfig& contact,
                                 const EnvPerturbation& pert) {
  pert.validate();
  ContactConfig out = contact;
  out.normal_stiffness *= pert.stiffness_scale;
  return out;
}

Vec6 contact_force(const Vec3& position, const Vec3& velocity,
                   const WorkpieceSurface& surface, const ContactConfig& cfg) {
  cfg.validate();
  Vec6 wrench = Vec6::Zero();
  const Vec3 n = surface.normal.normalized();
  const double sd = surface.signed_distance(position);
  if (sd >= 0.0) return wrench; // no contact

  const double penetration = -sd;
  const double approach_rate = velocity.dot(n); // sd rate; negative on approach
  double normal_mag = cfg.normal_stiffness * penetration;
  if (approach_rate < 0.0) normal_mag += cfg.normal_damping * (-approach_rate);

  const Vec3 tangential_vel = velocity - approach_rate * n;
  const double slide_speed = tangential_vel.norm();
  Vec3 tangential = Vec3::Zero();
  if (slide_speed > 0.0) {
    const double mu = cfg.friction + cfg.spin_gain * cfg.spindle_rpm / 1000.0;
    const double ramp = std::min(1.0, slide_speed / kSlidingEps);
    tangential = -mu * normal_mag * ramp * tangential_vel / slide_speed;
  }

  const Vec3 force = normal_mag * n + tangential;
  const Vec3 torque = -cfg.wheel_radius * n.cross(tangential);
  wrench.head<3>() = force;
  wrench.tail<3>() = torque;
  return wrench;
}

ToolState impedance_step(const ImpedanceGains& gains, const Vec3& reference,
                         const Vec6& external_wrench, const ToolState& state,
                         double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("impedance_step: dt must be > 0");
  check_finite_tool(state);
  if (!external_wrench.allFinite() || !reference.allFinite()) {
    throw std::invalid_argument("impedance_step: non-finite inputs");
  }
  const Vec3 force = external_wrench.head<3>();
  const Vec3 accel = (force - gains.damping.cwiseProduct(state.velocity) -
                      gains.stiffness.cwiseProduct(state.position - reference))
                         .cwiseQuotient(gains.mass);
  ToolState next;
  next.position = state.position + dt * state.velocity;
  next.velocity = state.velocity + dt * accel;
  return next;
}

EpisodeRecord run_episode(const SkillModel& skill, FeedbackHookup* feedback,
                          const EnvConfig& env, double duration, double dt) {
  if (!(duration > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("run_episode: duration and dt must be > 0");
  }
  env.gains.validate();
  const WorkpieceSurface surface = env.effective_surface();
  const ContactConfig contact = env.effective_contact();
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));

  if (feedback != nullptr && feedback->model != nullptr) {
    if (feedback->expected_force.size() < steps + 1) {
      throw std::invalid_argument("run_episode: expected-force profile too short");
    }
    feedback->model->reset();
  }

  DmpState state = DmpState::start_of(skill);
  PhaseState ph = PhaseState::initial(skill.position.tau);
  const double alpha_s = canonical_alpha();
  ToolState tool =
      settled_tool(state.p, surface, contact, env.gains, dt, env.substeps);

  EpisodeRecord rec;
  rec.samples.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    if (state.p.norm() > kDivergenceLimit) {
      throw std::runtime_error("run_episode: reference diverged at t=" +
                               std::to_string(k * dt) + " s");
    }
    const Vec6 wrench = contact_force(tool.position, tool.velocity, surface, contact);

    EpisodeSample sample;
    sample.t = static_cast<double>(k) * dt;
    sample.p = state.p;
    sample.q = state.q;
    sample.f = wrench;
    rec.samples.push_back(sample);
    if (k == steps) break;

    Modulation mod;
    if (feedback != nullptr && feedback->model != nullptr) {
      const Vec6 error = wrench - feedback->expected_force[k];
      const VecX c = feedback->model->correction(error, ph);
      if (c.size() >= 3) mod.coupling.position = c.head<3>();
      if (c.size() >= 6) mod.coupling.orientation = c.segment<3>(3);
    }
    tool = advance_physics(env.gains, state.p, surface, contact, tool, dt,
                           env.substeps);
    state = skill_step(skill, state, ph, mod, dt);
    ph = canonical_step(ph, alpha_s, dt);
  }
  return rec;
}

EpisodeRecord run_scripted_episode(const std::vector<Vec3>& reference,
                                   const UnitQuaternion& orientation,
                                   const EnvConfig& env, double dt) {
  if (reference.size() < 2) {
    throw std::invalid_argument("run_scripted_episode: reference needs >= 2 samples");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("run_scripted_episode: dt must be > 0");
  env.gains.validate();
  const WorkpieceSurface surface = env.effective_surface();
  const ContactConfig contact = env.effective_contact();

  ToolState tool =
      settled_tool(reference.front(), surface, contact, env.gains, dt, env.substeps);

  EpisodeRecord rec;
  rec.samples.reserve(reference.size());
  for (std::size_t k = 0; k < reference.size(); ++k) {
    if (reference[k].norm() > kDivergenceLimit) {
      throw std::runtime_error("run_scripted_episode: reference out of range at row " +
                               std::to_string(k));
    }
    EpisodeSample sample;
    sample.t = static_cast<double>(k) * dt;
    sample.p = reference[k];
    sample.q = orientation;
    sample.f = contact_force(tool.position, tool.velocity, surface, contact);
    rec.samples.push_back(sample);
    if (k + 1 == reference.size()) break;
    tool = advance_physics(env.gains, reference[k], surface, contact, tool, dt,
                           env.substeps);
  }
  return rec;
}

} // namespace polishfb
