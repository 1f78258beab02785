#include "polishfb/dmp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "json_io.hpp"

namespace polishfb {

namespace {

constexpr double kRidgeLambda = 1e-8;

void check_finite(const DmpState& st) {
  if (!st.p.allFinite() || !st.z.allFinite() || !st.r.allFinite() ||
      !std::isfinite(st.q.w)) {
    throw std::invalid_argument("skill_step: non-finite state");
  }
}

struct DemoGrid {
  std::vector<double> dt;  // per-interval spacing
  VecX phase;              // phase at each sample
  double tau = 0.0;
};

DemoGrid demo_grid(const EpisodeRecord& demo) {
  const auto n = demo.size();
  if (n < 3) throw std::invalid_argument("fit: demo needs at least 3 samples");
  DemoGrid grid;
  grid.dt.resize(n - 1);
  grid.phase.resize(static_cast<Eigen::Index>(n));
  grid.tau = demo.samples.back().t - demo.samples.front().t;
  PhaseState ph = PhaseState::initial(grid.tau);
  const double alpha_s = canonical_alpha();
  grid.phase[0] = ph.s;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dt = demo.samples[k + 1].t - demo.samples[k].t;
    if (!(dt > 0.0)) throw std::invalid_argument("fit: non-monotonic demo timestamps");
    grid.dt[k] = dt;
    ph = canonical_step(ph, alpha_s, dt);
    grid.phase[static_cast<Eigen::Index>(k) + 1] = ph.s;
  }
  return grid;
}

// Ridge least squares of the forcing targets over the normalized basis
// features phi_i(s) = psi_i(s)/sum(psi) * s. Recovers in-span forcings
// essentially exactly at lambda = 1e-8.
MatX solve_weights(const RbfBasis& basis, const VecX& phase, const MatX& targets) {
  const Eigen::Index n = phase.size();
  const Eigen::Index m = basis.size();
  MatX features(n, m);
  for (Eigen::Index k = 0; k < n; ++k) {
    features.row(k) = (basis.normalized(phase[k]) * phase[k]).transpose();
  }
  const MatX gram =
      features.transpose() * features + kRidgeLambda * MatX::Identity(m, m);
  return gram.ldlt().solve(features.transpose() * targets);
}

// Forward differences consistent with the explicit-Euler integrator:
// rows k < n-1 use (x_{k+1} - x_k)/dt_k, the last row repeats.
MatX euler_rate(const MatX& x, const std::vector<double>& dt) {
  MatX d(x.rows(), x.cols());
  for (Eigen::Index k = 0; k + 1 < x.rows(); ++k) {
    d.row(k) = (x.row(k + 1) - x.row(k)) / dt[static_cast<std::size_t>(k)];
  }
  d.row(x.rows() - 1) = d.row(x.rows() - 2);
  return d;
}





std::vector<double> quat_to_json(const UnitQuaternion& q) { return {q.w, q.x, q.y, q.z}; }

UnitQuaternion quat_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw std::runtime_error("skill json: quaternion needs 4 components");
  return {v[0], v[1], v[2], v[3]};
}

} // namespace

DmpState DmpState::start_of(const SkillModel& skill) {
  DmpState st;
  st.p = skill.position.start;
  st.q = skill.orientation.q_start;
  return st;
}

Vec3 forcing_term(const PositionDmp& dmp, double s, const MatX* weight_offset) {
  const VecX mix = dmp.basis.normalized(s);
  if (weight_offset != nullptr) {
    return ((dmp.weights + *weight_offset).transpose() * mix) * s;
  }
  return (dmp.weights.transpose() * mix) * s;
}

Vec3 forcing_term(const OrientationDmp& dmp, double s) {
  return (dmp.weights.transpose() * dmp.basis.normalized(s)) * s;
}

DmpState skill_step(const SkillModel& skill, const DmpState& state,
                    const PhaseState& ph, const Modulation& mod, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("skill_step: dt must be > 0");
  check_finite(state);

  const PositionDmp& pos = skill.position;
  const OrientationDmp& ori = skill.orientation;

  const Vec3 f_p = forcing_term(pos, ph.s, mod.forcing_weight_offset);
  const Vec3 zdot = (pos.alpha * (pos.beta() * (pos.goal - state.p) - state.z) +
                     f_p + mod.coupling.position + mod.action_bias) /
                    pos.tau;

  const Vec3 e = orientation_error(ori.q_goal, state.q);
  const Vec3 f_q = forcing_term(ori, ph.s);
  const Vec3 rdot = (-ori.alpha * (ori.beta() * e + state.r) + ori.start_offset() +
                     f_q + mod.coupling.orientation) /
                    ori.tau;

  DmpState next;
  next.p = state.p + dt * state.z / pos.tau;
  next.z = state.z + dt * zdot;
  const Vec3 e_next = e + dt * state.r / ori.tau;
  next.r = state.r + dt * rdot;
  next.q = quat_mul(quat_exp(-0.5 * e_next), ori.q_goal);
  return next;
}

PositionDmp fit_position_dmp(const EpisodeRecord& demo, int basis_count, double alpha) {
  const DemoGrid grid = demo_grid(demo);
  const auto n = static_cast<Eigen::Index>(demo.size());

  MatX p(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    p.row(k) = demo.samples[static_cast<std::size_t>(k)].p.transpose();
  }

  PositionDmp dmp;
  dmp.alpha = alpha;
  dmp.tau = grid.tau;
  dmp.start = p.row(0).transpose();
  dmp.goal = p.row(n - 1).transpose();
  dmp.basis = RbfBasis::make(basis_count);

  const MatX z = grid.tau * euler_rate(p, grid.dt);
  const MatX zdot = euler_rate(z, grid.dt);
  const MatX targets =
      grid.tau * zdot -
      alpha * ((alpha / 4.0) * ((-p).rowwise() + dmp.goal.transpose()) - z);
  dmp.weights = solve_weights(dmp.basis, grid.phase, targets);
  return dmp;
}

OrientationDmp fit_orientation_dmp(const EpisodeRecord& demo, int basis_count,
                                   double alpha) {
  const DemoGrid grid = demo_grid(demo);
  const auto n = static_cast<Eigen::Index>(demo.size());

  OrientationDmp dmp;
  dmp.alpha = alpha;
  dmp.tau = grid.tau;
  dmp.q_start = demo.samples.front().q;
  dmp.q_goal = demo.samples.back().q;
  dmp.basis = RbfBasis::make(basis_count);

  MatX e(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    e.row(k) =
        orientation_error(dmp.q_goal, demo.samples[static_cast<std::size_t>(k)].q)
            .transpose();
  }
  const MatX r = grid.tau * euler_rate(e, grid.dt);
  const MatX rdot = euler_rate(r, grid.dt);
  const MatX targets = (grid.tau * rdot + alpha * ((alpha / 4.0) * e + r)).rowwise() -
                       dmp.start_offset().transpose();
  dmp.weights = solve_weights(dmp.basis, grid.phase, targets);
  return dmp;
}

EpisodeRecord rollout(const SkillModel& skill, const CouplingProvider& coupling,
                      double duration, double dt, std::optional<DmpState> initial) {
  if (!(duration > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("rollout: duration and dt must be > 0");
  }
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  DmpState state = initial.value_or(DmpState::start_of(skill));
  PhaseState ph = PhaseState::initial(skill.position.tau);
  const double alpha_s = canonical_alpha();

  EpisodeRecord rec;
  rec.samples.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    EpisodeSample sample;
    sample.t = static_cast<double>(k) * dt;
    sample.p = state.p;
    sample.q = state.q;
    rec.samples.push_back(sample);
    if (k == steps) break;

    Modulation mod;
    if (coupling) mod.coupling = coupling(Vec6::Zero(), ph);
    state = skill_step(skill, state, ph, mod, dt);
    ph = canonical_step(ph, alpha_s, dt);
  }
  return rec;
}

SkillModel with_endpoints(const SkillModel& skill, const Vec3& start, const Vec3& goal) {
  SkillModel shifted = skill;
  shifted.position.start = start;
  shifted.position.goal = goal;
  return shifted;
}

void save_skill(const std::filesystem::path& path, const SkillModel& skill) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "skill";
  j["position"] = {{"alpha", skill.position.alpha},
                   {"tau", skill.position.tau},
                   {"start", {skill.position.start.x(), skill.position.start.y(),
                              skill.position.start.z()}},
                   {"goal", {skill.position.goal.x(), skill.position.goal.y(),
                             skill.position.goal.z()}},
                   {"basis", detail::basis_to_json(skill.position.basis)},
                   {"weights", detail::mat_to_json(skill.position.weights)}};
  j["orientation"] = {{"alpha", skill.orientation.alpha},
                      {"tau", skill.orientation.tau},
                      {"q_start", quat_to_json(skill.orientation.q_start)},
                      {"q_goal", quat_to_json(skill.orientation.q_goal)},
                      {"basis", detail::basis_to_json(skill.orientation.basis)},
                      {"weights", detail::mat_to_json(skill.orientation.weights)}};
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("save_skill: cannot open " + path.string());
  file << j.dump(2) << '\n';
}

SkillModel load_skill(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("load_skill: cannot open " + path.string());
  nlohmann::json j;
  file >> j;
  if (j.at("format_version").get<int>() != 1 || j.at("kind") != "skill") {
    throw std::runtime_error("load_skill: unsupported document " + path.string());
  }
  SkillModel skill;
  const auto& jp = j.at("position");
  skill.position.alpha = jp.at("alpha").get<double>();
  skill.position.tau = jp.at("tau").get<double>();
  const auto ps = jp.at("start").get<std::vector<double>>();
  const auto pg = jp.at("goal").get<std::vector<double>>();
  skill.position.start = Vec3(ps.at(0), ps.at(1), ps.at(2));
  skill.position.goal = Vec3(pg.at(0), pg.at(1), pg.at(2));
  skill.position.basis = detail::basis_from_json(jp.at("basis"));
  skill.position.weights = detail::mat_from_json(jp.at("weights"));
  const auto& jo = j.at("orientation");
  skill.orientation.alpha = jo.at("alpha").get<double>();
  skill.orientation.tau = jo.at("tau").get<double>();
  skill.orientation.q_start = quat_from_json(jo.at("q_start"));
  skill.orientation.q_goal = quat_from_json(jo.at("q_goal"));
  skill.orientation.basis = detail::basis_from_json(jo.at("basis"));
  skill.orientation.weights = detail::mat_from_json(jo.at("weights"));
  return skill;
}

} // namespace polishfb
