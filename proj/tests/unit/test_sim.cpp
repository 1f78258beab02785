#include <doctest.h>

#include <cmath>

#include "polishfb/sim.hpp"

using namespace polishfb;

namespace {

EnvConfig default_env() {
  EnvConfig env;
  env.gains.mass = Vec3(5, 5, 5);
  env.gains.damping = Vec3(140, 140, 140);
  env.gains.stiffness = Vec3(3500, 3500, 3500);
  env.contact.normal_damping = 150.0;
  return env;
}

} // namespace

TEST_CASE("contact force: reference values") {
  WorkpieceSurface surface;
  ContactConfig cfg;

  // out of contact
  CHECK(contact_force(Vec3(0, 0, 0.001), Vec3::Zero(), surface, cfg).norm() == 0.0);
  CHECK(contact_force(Vec3(0, 0, 0.0), Vec3::Zero(), surface, cfg).norm() == 0.0);

  // 1 mm penetration, no velocity: pure spring force of 20 N along +z
  const Vec6 w = contact_force(Vec3(0, 0, -0.001), Vec3::Zero(), surface, cfg);
  CHECK(w[2] == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::abs(w[0]) == 0.0);
  CHECK(std::abs(w[1]) == 0.0);
  CHECK(w.tail<3>().norm() == 0.0); // no sliding, no spin torque

  // spindle speed raises the tangential share by spin_gain * rpm/1000 * |Fn|
  const Vec3 sliding(0.03, 0, 0);
  ContactConfig spin_off = cfg;
  spin_off.spindle_rpm = 0.0;
  const Vec6 with_spin = contact_force(Vec3(0, 0, -0.001), sliding, surface, cfg);
  const Vec6 no_spin = contact_force(Vec3(0, 0, -0.001), sliding, surface, spin_off);
  const double tangential_with = with_spin.head<2>().norm();
  const double tangential_without = no_spin.head<2>().norm();
  CHECK(tangential_with - tangential_without ==
        doctest::Approx(cfg.spin_gain * 2.0 * 20.0).epsilon(1e-9));
  // friction opposes sliding and the spin torque sits on the lever arm
  CHECK(with_spin[0] < 0.0);
  CHECK(with_spin.tail<3>().norm() ==
        doctest::Approx(cfg.wheel_radius * tangential_with).epsilon(1e-9));
}

TEST_CASE("contact force: approach damping is gated") {
  WorkpieceSurface surface;
  ContactConfig cfg;
  const Vec3 pos(0, 0, -0.001);
  const Vec6 approaching = contact_force(pos, Vec3(0, 0, -0.01), surface, cfg);
  const Vec6 retreating = contact_force(pos, Vec3(0, 0, 0.01), surface, cfg);
  CHECK(approaching[2] == doctest::Approx(20.0 + cfg.normal_damping * 0.01));
  CHECK(retreating[2] == doctest::Approx(20.0)); // no adhesion on retreat
}

TEST_CASE("contact force: continuous in position across the boundary") {
  WorkpieceSurface surface;
  ContactConfig cfg;
  double prev = contact_force(Vec3(0, 0, 1e-4), Vec3::Zero(), surface, cfg)[2];
  for (double z = 1e-4; z > -1e-4; z -= 1e-6) {
    const double f = contact_force(Vec3(0, 0, z), Vec3::Zero(), surface, cfg)[2];
    CHECK(std::abs(f - prev) < cfg.normal_stiffness * 2e-6);
    prev = f;
  }
}

TEST_CASE("contact force: height field shifts the surface") {
  WorkpieceSurface surface;
  WorkpieceSurface::HeightField hf;
  hf.u0 = -0.1;
  hf.v0 = -0.1;
  hf.du = 0.1;
  hf.dv = 0.1;
  hf.values = MatX::Zero(3, 3);
  hf.values(1, 1) = 0.002; // bump at the origin
  surface.height = hf;

  CHECK(surface.height_at(0.0, 0.0) == doctest::Approx(0.002));
  CHECK(surface.height_at(0.05, 0.0) == doctest::Approx(0.001)); // midpoint
  CHECK(surface.signed_distance(Vec3(0, 0, 0.001)) == doctest::Approx(-0.001));
  const Vec6 w = contact_force(Vec3(0, 0, 0.001), Vec3::Zero(), surface,
                               ContactConfig{});
  CHECK(w[2] == doctest::Approx(20.0));
}

TEST_CASE("perturbation application") {
  WorkpieceSurface surface;
  ContactConfig contact;
  EnvPerturbation pert;
  pert.offset = Vec3(0, 0, 0.002);
  pert.tilt_axis = Vec3::UnitY();
  pert.tilt_angle = 0.1;
  pert.stiffness_scale = 2.0;

  const WorkpieceSurface moved = apply_perturbation(surface, pert);
  CHECK(moved.origin.z() == doctest::Approx(0.002));
  CHECK(moved.normal.x() == doctest::Approx(std::sin(0.1)));
  CHECK(moved.normal.z() == doctest::Approx(std::cos(0.1)));
  CHECK(apply_perturbation(contact, pert).normal_stiffness == doctest::Approx(40000.0));

  EnvPerturbation bad;
  bad.tilt_angle = 0.3;
  CHECK_THROWS_AS(apply_perturbation(surface, bad), std::invalid_argument);
  bad.tilt_angle = 0.0;
  bad.stiffness_scale = 10.0;
  CHECK_THROWS_AS(apply_perturbation(contact, bad), std::invalid_argument);
}

TEST_CASE("impedance step: equilibrium, steady state, passivity") {
  ImpedanceGains gains;
  const Vec3 ref(0.1, -0.2, 0.3);

  ToolState at_rest;
  at_rest.position = ref;
  const ToolState still = impedance_step(gains, ref, Vec6::Zero(), at_rest, 0.001);
  CHECK((still.position - ref).norm() == 0.0);
  CHECK(still.velocity.norm() == 0.0);

  // constant force settles at F/K
  Vec6 push = Vec6::Zero();
  push[0] = 10.0;
  ToolState tool;
  tool.position = ref;
  for (int k = 0; k < 20000; ++k) tool = impedance_step(gains, ref, push, tool, 0.001);
  CHECK(tool.position.x() - ref.x() ==
        doctest::Approx(10.0 / gains.stiffness.x()).epsilon(1e-6));

  // free response decays monotonically for overdamped gains
  ImpedanceGains heavy;
  heavy.mass = Vec3(1, 1, 1);
  heavy.damping = Vec3(200, 200, 200);
  heavy.stiffness = Vec3(1000, 1000, 1000);
  ToolState offset;
  offset.position = ref + Vec3(0.01, 0, 0);
  double prev = 0.01;
  for (int k = 0; k < 5000; ++k) {
    offset = impedance_step(heavy, ref, Vec6::Zero(), offset, 0.001);
    const double dist = (offset.position - ref).norm();
    CHECK(dist <= prev + 1e-12);
    prev = dist;
  }
  CHECK(prev < 1e-4);

  CHECK_THROWS_AS(impedance_step(gains, ref, Vec6::Zero(), at_rest, 0.0),
                  std::invalid_argument);
  ToolState broken;
  broken.position[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(impedance_step(gains, ref, Vec6::Zero(), broken, 0.001),
                  std::invalid_argument);
}

TEST_CASE("scripted episode realizes the commanded contact force") {
  EnvConfig env = default_env();
  const double dt = 0.02;
  const double compliance =
      1.0 / env.contact.normal_stiffness + 1.0 / env.gains.stiffness.z();
  const double force = 22.0;

  std::vector<Vec3> ref(201, Vec3(0, 0, -force * compliance));
  for (std::size_t k = 0; k < ref.size(); ++k) {
    ref[k].x() = 0.0002 * static_cast<double>(k); // slow lateral slide
  }
  const EpisodeRecord rec = run_scripted_episode(ref, UnitQuaternion(), env, dt);
  REQUIRE(rec.size() == ref.size());
  for (std::size_t k = 20; k < rec.size(); ++k) {
    CHECK(rec.samples[k].f[2] == doctest::Approx(force).epsilon(0.05));
  }
}

TEST_CASE("perturbation monotonicity: offsets toward the tool raise the force") {
  EnvConfig env = default_env();
  const double dt = 0.02;
  const double compliance =
      1.0 / env.contact.normal_stiffness + 1.0 / env.gains.stiffness.z();
  std::vector<Vec3> ref(151, Vec3(0, 0, -21.0 * compliance));

  double prev_mean = -1.0;
  for (double offset : {0.0, 0.0005, 0.001, 0.002}) {
    EnvConfig perturbed = env;
    perturbed.perturbation.offset = Vec3(0, 0, offset);
    const EpisodeRecord rec = run_scripted_episode(ref, UnitQuaternion(), perturbed, dt);
    double mean = 0.0;
    for (const auto& s : rec.samples) mean += s.f[2];
    mean /= static_cast<double>(rec.size());
    CHECK(mean > prev_mean);
    prev_mean = mean;
  }
}

TEST_CASE("episodes are deterministic") {
  EnvConfig env = default_env();
  std::vector<Vec3> ref(101, Vec3(0, 0, -0.005));
  const EpisodeRecord a = run_scripted_episode(ref, UnitQuaternion(), env, 0.02);
  const EpisodeRecord b = run_scripted_episode(ref, UnitQuaternion(), env, 0.02);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a.samples[k].f == b.samples[k].f);
    CHECK(a.samples[k].p == b.samples[k].p);
  }
}

TEST_CASE("run_episode aborts on divergent references") {
  EnvConfig env = default_env();
  SkillModel skill;
  skill.position.tau = 1.0;
  skill.position.basis = RbfBasis::make(5);
  skill.position.weights = MatX::Zero(5, 3);
  skill.position.start = Vec3(0, 0, 11.0); // outside the sanity range
  skill.position.goal = Vec3(0, 0, 11.0);
  skill.orientation.tau = 1.0;
  skill.orientation.basis = RbfBasis::make(5);
  skill.orientation.weights = MatX::Zero(5, 3);
  CHECK_THROWS_AS(run_episode(skill, nullptr, env, 1.0, 0.02), std::runtime_error);
}
