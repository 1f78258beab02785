#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "polishfb/dmp.hpp"

using namespace polishfb;

namespace {

double min_jerk(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

// Demo that completes its motion over the first `move_fraction` of the
// episode and settles, so a fitted model's rollout ends on its goal.
EpisodeRecord settled_position_demo(const Vec3& from, const Vec3& to, double duration,
                                    double dt, double move_fraction = 0.4) {
  EpisodeRecord rec;
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  for (std::size_t k = 0; k <= steps; ++k) {
    EpisodeSample s;
    s.t = static_cast<double>(k) * dt;
    s.p = from + min_jerk(s.t / (move_fraction * duration)) * (to - from);
    rec.samples.push_back(s);
  }
  return rec;
}

EpisodeRecord rotation_demo(double angle, const Vec3& axis, double duration, double dt,
                            double move_fraction = 0.4) {
  EpisodeRecord rec;
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  for (std::size_t k = 0; k <= steps; ++k) {
    EpisodeSample s;
    s.t = static_cast<double>(k) * dt;
    s.q = UnitQuaternion::from_axis_angle(
        axis, angle * min_jerk(s.t / (move_fraction * duration)));
    rec.samples.push_back(s);
  }
  return rec;
}

double forcing_match(const PositionDmp& a, const PositionDmp& b) {
  double worst = 0.0;
  double scale = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double s = 1.0 - 0.99 * i / 99.0;
    const Vec3 fa = forcing_term(a, s);
    const Vec3 fb = forcing_term(b, s);
    worst = std::max(worst, (fa - fb).lpNorm<Eigen::Infinity>());
    scale = std::max(scale, fa.lpNorm<Eigen::Infinity>());
  }
  return worst / std::max(scale, 1e-12);
}

double forcing_match(const OrientationDmp& a, const OrientationDmp& b) {
  double worst = 0.0;
  double scale = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double s = 1.0 - 0.99 * i / 99.0;
    const Vec3 fa = forcing_term(a, s);
    const Vec3 fb = forcing_term(b, s);
    worst = std::max(worst, (fa - fb).lpNorm<Eigen::Infinity>());
    scale = std::max(scale, fa.lpNorm<Eigen::Infinity>());
  }
  return worst / std::max(scale, 1e-12);
}

SkillModel skill_from(const EpisodeRecord& demo, int basis = 25) {
  SkillModel skill;
  skill.position = fit_position_dmp(demo, basis);
  skill.orientation = fit_orientation_dmp(demo, basis);
  return skill;
}

} // namespace

TEST_CASE("forcing term basics") {
  PositionDmp dmp;
  dmp.basis = RbfBasis::make(25);
  dmp.weights = MatX::Zero(25, 3);
  CHECK(forcing_term(dmp, 0.7).norm() == 0.0);

  dmp.weights = MatX::Constant(25, 3, 4.0);
  CHECK(forcing_term(dmp, 0.0).norm() == 0.0); // trailing s factor
  for (double s : {0.05, 0.3, 0.8, 1.0}) {
    const Vec3 f = forcing_term(dmp, s);
    for (int i = 0; i < 3; ++i) CHECK(f[i] == doctest::Approx(4.0 * s).epsilon(1e-12));
  }
}

TEST_CASE("position fit: roundtrip oracle") {
  const double dt = 0.02;
  const EpisodeRecord demo =
      settled_position_demo(Vec3::Zero(), Vec3(0.1, 0.05, -0.02), 5.0, dt);
  const PositionDmp first = fit_position_dmp(demo, 25);

  SkillModel skill;
  skill.position = first;
  skill.orientation = fit_orientation_dmp(demo, 25);
  const EpisodeRecord replay = rollout(skill, nullptr, 5.0, dt);
  const PositionDmp second = fit_position_dmp(replay, 25);

  CHECK(forcing_match(first, second) < 1e-3);
}

TEST_CASE("position fit: minimum-jerk fidelity and goal convergence") {
  const double dt = 0.02;
  const double duration = 5.0;
  const EpisodeRecord demo =
      settled_position_demo(Vec3::Zero(), Vec3(0.1, 0.0, 0.0), duration, dt,
                            /*move_fraction=*/1.0); // plain min-jerk line
  SkillModel skill = skill_from(demo);
  const EpisodeRecord replay = rollout(skill, nullptr, duration, dt);

  double sq = 0.0;
  for (std::size_t k = 0; k < demo.size(); ++k) {
    sq += (replay.samples[k].p - demo.samples[k].p).squaredNorm();
  }
  const double rmse = std::sqrt(sq / static_cast<double>(demo.size()));
  CHECK(rmse < 0.01 * 0.1); // < 1% of path length

  const EpisodeRecord twice = rollout(skill, nullptr, 2.0 * duration, dt);
  CHECK((twice.samples.back().p - skill.position.goal).norm() < 1e-3 * 0.1);
}

TEST_CASE("position fit: degenerate stationary demo") {
  const double dt = 0.02;
  EpisodeRecord demo;
  for (int k = 0; k <= 150; ++k) {
    EpisodeSample s;
    s.t = k * dt;
    s.p = Vec3(0.3, -0.1, 0.2);
    demo.samples.push_back(s);
  }
  SkillModel skill = skill_from(demo);
  const EpisodeRecord replay = rollout(skill, nullptr, 3.0, dt);
  for (const auto& s : replay.samples) {
    CHECK((s.p - Vec3(0.3, -0.1, 0.2)).norm() < 1e-3);
  }
}

TEST_CASE("position fit: input validation") {
  EpisodeRecord tiny;
  for (int k = 0; k < 2; ++k) {
    EpisodeSample s;
    s.t = k * 0.02;
    tiny.samples.push_back(s);
  }
  CHECK_THROWS_AS(fit_position_dmp(tiny, 25), std::invalid_argument);

  EpisodeRecord bad = settled_position_demo(Vec3::Zero(), Vec3::UnitX(), 2.0, 0.02);
  bad.samples[5].t = bad.samples[7].t; // non-monotonic
  CHECK_THROWS_AS(fit_position_dmp(bad, 25), std::invalid_argument);
}

TEST_CASE("orientation fit: stationary and 60-degree demos") {
  const double dt = 0.02;
  {
    EpisodeRecord demo;
    const UnitQuaternion q = UnitQuaternion::from_axis_angle(Vec3(1, 1, 0), 0.8);
    for (int k = 0; k <= 150; ++k) {
      EpisodeSample s;
      s.t = k * dt;
      s.q = q;
      demo.samples.push_back(s);
    }
    const OrientationDmp dmp = fit_orientation_dmp(demo, 25);
    CHECK(dmp.weights.lpNorm<Eigen::Infinity>() < 1e-9);

    SkillModel skill;
    skill.orientation = dmp;
    skill.position = fit_position_dmp(demo, 25);
    const EpisodeRecord replay = rollout(skill, nullptr, 3.0, dt);
    for (const auto& s : replay.samples) {
      CHECK(orientation_error(q, s.q).norm() < 1e-6);
    }
  }
  {
    const EpisodeRecord demo = rotation_demo(M_PI / 3, Vec3::UnitZ(), 5.0, dt);
    SkillModel skill;
    skill.orientation = fit_orientation_dmp(demo, 25);
    skill.position = fit_position_dmp(
        settled_position_demo(Vec3::Zero(), Vec3::Zero(), 5.0, dt), 25);
    const EpisodeRecord replay = rollout(skill, nullptr, 5.0, dt);
    const double terminal_angle =
        orientation_error(skill.orientation.q_goal, replay.samples.back().q).norm();
    CHECK(terminal_angle < 0.5 * M_PI / 180.0); // within 0.5 degrees
  }
}

TEST_CASE("orientation fit: roundtrip oracle") {
  const double dt = 0.02;
  const EpisodeRecord demo = rotation_demo(1.1, Vec3(0.2, -1.0, 0.4), 5.0, dt);
  SkillModel skill;
  skill.orientation = fit_orientation_dmp(demo, 25);
  skill.position =
      fit_position_dmp(settled_position_demo(Vec3::Zero(), Vec3::Zero(), 5.0, dt), 25);
  const EpisodeRecord replay = rollout(skill, nullptr, 5.0, dt);
  const OrientationDmp second = fit_orientation_dmp(replay, 25);
  CHECK(forcing_match(skill.orientation, second) < 1e-3);
}

TEST_CASE("skill_step: critically damped convergence and goal equilibrium") {
  SkillModel skill;
  skill.position.tau = 2.0;
  skill.position.start = Vec3::Zero();
  skill.position.goal = Vec3(0.2, -0.1, 0.3);
  skill.position.basis = RbfBasis::make(25);
  skill.position.weights = MatX::Zero(25, 3);
  skill.orientation.tau = 2.0;
  skill.orientation.basis = RbfBasis::make(25);
  skill.orientation.weights = MatX::Zero(25, 3);

  const double dt = 0.02;
  DmpState state = DmpState::start_of(skill);
  PhaseState ph = PhaseState::initial(skill.position.tau);
  for (int k = 0; k < 200; ++k) { // run to t = 2 tau
    state = skill_step(skill, state, ph, Modulation{}, dt);
    ph = canonical_step(ph, canonical_alpha(), dt);
  }
  CHECK((state.p - skill.position.goal).norm() <
        1e-3 * (skill.position.goal - skill.position.start).norm());

  // at the orientation goal with zero rate and equal endpoints, nothing moves
  SkillModel still = skill;
  still.position.goal = Vec3::Zero();
  DmpState at_goal = DmpState::start_of(still);
  const DmpState next = skill_step(still, at_goal, ph, Modulation{}, dt);
  CHECK((next.p - at_goal.p).norm() == 0.0);
  CHECK(orientation_error(still.orientation.q_goal, next.q).norm() == 0.0);
  CHECK(next.r.norm() == 0.0);
}

TEST_CASE("skill_step: coupling enters the velocity update as C/tau") {
  SkillModel skill;
  skill.position.tau = 1.6;
  skill.position.basis = RbfBasis::make(10);
  skill.position.weights = MatX::Zero(10, 3);
  skill.orientation.basis = RbfBasis::make(10);
  skill.orientation.weights = MatX::Zero(10, 3);
  skill.orientation.tau = 1.6;

  const DmpState state = DmpState::start_of(skill);
  const PhaseState ph = PhaseState::initial(skill.position.tau);
  const double dt = 0.02;
  const double c = 3.7;

  Modulation with_coupling;
  with_coupling.coupling.position = Vec3(c, 0, 0);
  const DmpState a = skill_step(skill, state, ph, with_coupling, dt);
  const DmpState b = skill_step(skill, state, ph, Modulation{}, dt);
  CHECK((a.z - b.z).x() == doctest::Approx(dt * c / skill.position.tau).epsilon(1e-12));
  CHECK((a.z - b.z).y() == 0.0);

  // the action-space hook is additive in the same place
  Modulation with_bias;
  with_bias.action_bias = Vec3(c, 0, 0);
  const DmpState d = skill_step(skill, state, ph, with_bias, dt);
  CHECK((d.z - b.z).x() == doctest::Approx(dt * c / skill.position.tau).epsilon(1e-12));

  // the forcing-weight hook perturbs the forcing evaluation
  MatX offset = MatX::Constant(10, 3, 2.0);
  Modulation with_offset;
  with_offset.forcing_weight_offset = &offset;
  const DmpState e = skill_step(skill, state, ph, with_offset, dt);
  CHECK((e.z - b.z).x() ==
        doctest::Approx(dt * 2.0 * ph.s / skill.position.tau).epsilon(1e-10));

  CHECK_THROWS_AS(skill_step(skill, state, ph, Modulation{}, 0.0),
                  std::invalid_argument);
  DmpState broken = state;
  broken.p[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(skill_step(skill, broken, ph, Modulation{}, dt),
                  std::invalid_argument);
}

TEST_CASE("rollout: nominal reproduction, temporal scaling, coupling effect") {
  const double dt = 0.02;
  const double duration = 5.0;
  const EpisodeRecord demo =
      settled_position_demo(Vec3::Zero(), Vec3(0.1, -0.04, 0.06), duration, dt);
  SkillModel skill = skill_from(demo);

  const EpisodeRecord nominal = rollout(skill, nullptr, duration, dt);
  double sq = 0.0;
  for (std::size_t k = 0; k < demo.size(); ++k) {
    sq += (nominal.samples[k].p - demo.samples[k].p).squaredNorm();
  }
  CHECK(std::sqrt(sq / static_cast<double>(demo.size())) < 0.01 * 0.124);

  // doubling tau with a matching grid reproduces the path point-for-point
  SkillModel slow = skill;
  slow.position.tau *= 2.0;
  slow.orientation.tau *= 2.0;
  const EpisodeRecord stretched = rollout(slow, nullptr, 2.0 * duration, 2.0 * dt);
  REQUIRE(stretched.size() == nominal.size());
  for (std::size_t k = 0; k < nominal.size(); ++k) {
    CHECK((stretched.samples[k].p - nominal.samples[k].p).norm() < 1e-3);
    CHECK(stretched.samples[k].t == doctest::Approx(2.0 * nominal.samples[k].t));
  }

  // a constant coupling displaces the trajectory
  const EpisodeRecord pushed = rollout(
      skill,
      [](const Vec6&, const PhaseState&) {
        CouplingTerm c;
        c.position = Vec3(0.5, 0, 0);
        return c;
      },
      duration, dt);
  double max_dev = 0.0;
  for (std::size_t k = 0; k < nominal.size(); ++k) {
    max_dev = std::max(max_dev, (pushed.samples[k].p - nominal.samples[k].p).norm());
  }
  CHECK(max_dev > 1e-4);
}

TEST_CASE("rollout: goal change moves the attractor without blowing up") {
  const double dt = 0.02;
  const EpisodeRecord demo =
      settled_position_demo(Vec3::Zero(), Vec3(0.1, 0.0, 0.0), 4.0, dt);
  SkillModel skill = skill_from(demo);
  const SkillModel shifted =
      with_endpoints(skill, Vec3(0.01, 0.02, 0.0), Vec3(0.15, -0.03, 0.01));
  const EpisodeRecord replay = rollout(shifted, nullptr, 8.0, dt);
  for (const auto& s : replay.samples) REQUIRE(s.p.allFinite());
  CHECK((replay.samples.back().p - shifted.position.goal).norm() < 1e-3 * 0.1);
}

TEST_CASE("rollout preserves quaternion norm") {
  const double dt = 0.02;
  const EpisodeRecord demo = rotation_demo(1.3, Vec3(0.3, 0.8, -0.2), 4.0, dt);
  SkillModel skill;
  skill.orientation = fit_orientation_dmp(demo, 25);
  skill.position =
      fit_position_dmp(settled_position_demo(Vec3::Zero(), Vec3::Zero(), 4.0, dt), 25);
  const EpisodeRecord replay = rollout(skill, nullptr, 4.0, dt);
  for (const auto& s : replay.samples) {
    CHECK(std::abs(s.q.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("skill JSON round-trip is bit-exact") {
  const double dt = 0.02;
  const EpisodeRecord demo =
      settled_position_demo(Vec3(0.01, -0.02, 0.03), Vec3(0.1, 0.05, -0.02), 4.0, dt);
  const SkillModel skill = skill_from(demo);

  const auto dir = std::filesystem::temp_directory_path() / "polishfb_skill_rt";
  std::filesystem::create_directories(dir);
  const auto path1 = dir / "skill.json";
  const auto path2 = dir / "skill2.json";
  save_skill(path1, skill);
  const SkillModel loaded = load_skill(path1);
  save_skill(path2, loaded);

  std::ifstream f1(path1, std::ios::binary);
  std::ifstream f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(loaded.position.weights == skill.position.weights);
  CHECK(loaded.orientation.q_goal.w == skill.orientation.q_goal.w);
  std::filesystem::remove_all(dir);
}
