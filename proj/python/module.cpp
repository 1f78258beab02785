// Python bindings for the core operations: quaternion maps, the canonical
// system, DMP fitting/rollout, the feedback networks and their training,
// and the contact-simulation episode runners.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "polishfb/dmp.hpp"
#include "polishfb/episode.hpp"
#include "polishfb/feedback_net.hpp"
#include "polishfb/phase.hpp"
#include "polishfb/pipeline.hpp"
#include "polishfb/quaternion.hpp"
#include "polishfb/rbf.hpp"
#include "polishfb/sim.hpp"
#include "polishfb/version.hpp"

namespace py = pybind11;
using namespace polishfb;

namespace {

Eigen::Matrix<double, Eigen::Dynamic, 4> episode_quaternions(const EpisodeRecord& rec) {
  Eigen::Matrix<double, Eigen::Dynamic, 4> out(rec.size(), 4);
  for (std::size_t k = 0; k < rec.size(); ++k) {
    const auto& q = rec.samples[k].q;
    out.row(static_cast<Eigen::Index>(k)) << q.w, q.x, q.y, q.z;
  }
  return out;
}

EpisodeRecord episode_from_arrays(const VecX& t, const MatX& p, const MatX& q,
                                  const MatX& f) {
  const auto n = t.size();
  if (p.rows() != n || q.rows() != n || f.rows() != n || p.cols() != 3 ||
      q.cols() != 4 || f.cols() != 6) {
    throw std::invalid_argument("episode arrays must be t[n], p[n,3], q[n,4], f[n,6]");
  }
  EpisodeRecord rec;
  rec.samples.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    auto& s = rec.samples[static_cast<std::size_t>(k)];
    s.t = t[k];
    s.p = p.row(k).transpose();
    s.q = UnitQuaternion(q(k, 0), q(k, 1), q(k, 2), q(k, 3));
    s.f = f.row(k).transpose();
  }
  return rec;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Force-feedback skill adaptation: DMP skills, recurrent feedback "
            "models, and a contact-polishing simulator";
  m.attr("__version__") = kVersion;

  py::class_<UnitQuaternion>(m, "UnitQuaternion")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), py::arg("w"), py::arg("x"),
           py::arg("y"), py::arg("z"))
      .def_static("from_axis_angle", &UnitQuaternion::from_axis_angle, py::arg("axis"),
                  py::arg("angle"))
      .def_readonly("w", &UnitQuaternion::w)
      .def_readonly("x", &UnitQuaternion::x)
      .def_readonly("y", &UnitQuaternion::y)
      .def_readonly("z", &UnitQuaternion::z)
      .def("conjugate", &UnitQuaternion::conjugate)
      .def("norm", &UnitQuaternion::norm)
      .def("__repr__", [](const UnitQuaternion& q) {
        return "UnitQuaternion(" + std::to_string(q.w) + ", " + std::to_string(q.x) +
               ", " + std::to_string(q.y) + ", " + std::to_string(q.z) + ")";
      });

  m.def("quat_mul", &quat_mul, py::arg("a"), py::arg("b"));
  m.def("quat_log", &quat_log, py::arg("q"));
  m.def("quat_exp", &quat_exp, py::arg("r"));
  m.def("orientation_error", &orientation_error, py::arg("q_goal"), py::arg("q"));

  py::class_<PhaseState>(m, "PhaseState")
      .def(py::init<>())
      .def_static("initial", &PhaseState::initial, py::arg("tau"),
                  py::arg("alpha_s") = canonical_alpha())
      .def_readwrite("s", &PhaseState::s)
      .def_readwrite("u", &PhaseState::u)
      .def_readwrite("tau", &PhaseState::tau);
  m.def("canonical_alpha", &canonical_alpha);
  m.def("canonical_step", &canonical_step, py::arg("phase"), py::arg("alpha_s"),
        py::arg("dt"));

  py::class_<RbfBasis>(m, "RbfBasis")
      .def_static("make", &RbfBasis::make, py::arg("count"))
      .def_readonly("centers", &RbfBasis::centers)
      .def_readonly("widths", &RbfBasis::widths)
      .def("raw", &RbfBasis::raw, py::arg("s"))
      .def("normalized", &RbfBasis::normalized, py::arg("s"));

  py::class_<EpisodeRecord>(m, "EpisodeRecord")
      .def(py::init(&episode_from_arrays), py::arg("t"), py::arg("p"), py::arg("q"),
           py::arg("f"))
      .def("__len__", &EpisodeRecord::size)
      .def("duration", &EpisodeRecord::duration)
      .def("times",
           [](const EpisodeRecord& rec) {
             VecX t(static_cast<Eigen::Index>(rec.size()));
             for (std::size_t k = 0; k < rec.size(); ++k)
               t[static_cast<Eigen::Index>(k)] = rec.samples[k].t;
             return t;
           })
      .def("positions",
           [](const EpisodeRecord& rec) {
             MatX p(rec.size(), 3);
             for (std::size_t k = 0; k < rec.size(); ++k)
               p.row(static_cast<Eigen::Index>(k)) = rec.samples[k].p.transpose();
             return p;
           })
      .def("quaternions", &episode_quaternions)
      .def("wrenches", [](const EpisodeRecord& rec) {
        MatX f(rec.size(), 6);
        for (std::size_t k = 0; k < rec.size(); ++k)
          f.row(static_cast<Eigen::Index>(k)) = rec.samples[k].f.transpose();
        return f;
      });
  m.def("write_episode_csv", &write_episode_csv, py::arg("path"), py::arg("record"));
  m.def("read_episode_csv", &read_episode_csv, py::arg("path"));
  m.def("validate_episode", &validate_episode, py::arg("record"), py::arg("dt") = 0.02);

  py::class_<PositionDmp>(m, "PositionDmp")
      .def_readwrite("alpha", &PositionDmp::alpha)
      .def_readwrite("tau", &PositionDmp::tau)
      .def_readwrite("start", &PositionDmp::start)
      .def_readwrite("goal", &PositionDmp::goal)
      .def_readwrite("weights", &PositionDmp::weights)
      .def_property_readonly("beta", &PositionDmp::beta);

  py::class_<OrientationDmp>(m, "OrientationDmp")
      .def_readwrite("alpha", &OrientationDmp::alpha)
      .def_readwrite("tau", &OrientationDmp::tau)
      .def_readwrite("q_start", &OrientationDmp::q_start)
      .def_readwrite("q_goal", &OrientationDmp::q_goal)
      .def_readwrite("weights", &OrientationDmp::weights)
      .def("start_offset", &OrientationDmp::start_offset);

  py::class_<SkillModel>(m, "SkillModel")
      .def(py::init<>())
      .def_readwrite("position", &SkillModel::position)
      .def_readwrite("orientation", &SkillModel::orientation);

  m.def("fit_position_dmp", &fit_position_dmp, py::arg("demo"),
        py::arg("basis_count") = 25, py::arg("alpha") = 25.0);
  m.def("fit_orientation_dmp", &fit_orientation_dmp, py::arg("demo"),
        py::arg("basis_count") = 25, py::arg("alpha") = 25.0);
  m.def(
      "forcing_term",
      [](const PositionDmp& dmp, double s) { return forcing_term(dmp, s); },
      py::arg("dmp"), py::arg("s"));
  m.def(
      "rollout",
      [](const SkillModel& skill, double duration, double dt) {
        return rollout(skill, nullptr, duration, dt);
      },
      py::arg("skill"), py::arg("duration"), py::arg("dt") = 0.02);
  m.def(
      "rollout_with_coupling",
      [](const SkillModel& skill,
         const std::function<Vec3(const Vec6&, double, double)>& provider,
         double duration, double dt) {
        return rollout(
            skill,
            [&provider](const Vec6& df, const PhaseState& ph) {
              CouplingTerm c;
              c.position = provider(df, ph.s, ph.u);
              return c;
            },
            duration, dt);
      },
      py::arg("skill"), py::arg("provider"), py::arg("duration"), py::arg("dt") = 0.02,
      "provider(wrench_error, s, u) -> position coupling");
  m.def("save_skill", &save_skill, py::arg("path"), py::arg("skill"));
  m.def("load_skill", &load_skill, py::arg("path"));

  py::class_<WrenchError>(m, "WrenchError")
      .def(py::init([](const Vec6& value) {
             WrenchError e;
             e.value = value;
             return e;
           }),
           py::arg("value"))
      .def_readwrite("value", &WrenchError::value);

  py::class_<FeedbackState>(m, "FeedbackState")
      .def_static("zero", &FeedbackState::zero, py::arg("hidden"), py::arg("output_dim"))
      .def_readwrite("h_gru", &FeedbackState::h_gru)
      .def_readwrite("c_prev1", &FeedbackState::c_prev1)
      .def_readwrite("c_prev2", &FeedbackState::c_prev2);

  py::class_<PmdrnnParams>(m, "PmdrnnParams")
      .def_static("init", &PmdrnnParams::init, py::arg("hidden"), py::arg("output_dim"),
                  py::arg("phase_basis"), py::arg("seed"),
                  py::arg("diagonal_recurrence") = false)
      .def_readonly("hidden", &PmdrnnParams::hidden)
      .def_readonly("output_dim", &PmdrnnParams::output_dim)
      .def_readonly("phase_basis", &PmdrnnParams::phase_basis)
      .def_readwrite("w_out", &PmdrnnParams::w_out);

  py::class_<PmnnParams>(m, "PmnnParams")
      .def_static("init", &PmnnParams::init, py::arg("hidden"), py::arg("output_dim"),
                  py::arg("phase_basis"), py::arg("seed"))
      .def_readonly("hidden", &PmnnParams::hidden)
      .def_readonly("output_dim", &PmnnParams::output_dim)
      .def_readwrite("w_out", &PmnnParams::w_out);

  m.def(
      "pmdrnn_forward",
      [](const PmdrnnParams& p, const Vec6& df, const FeedbackState& state, double s,
         double u) {
        WrenchError e;
        e.value = df;
        PhaseState ph;
        ph.s = s;
        ph.u = u;
        return pmdrnn_forward(p, e, state, ph);
      },
      py::arg("params"), py::arg("wrench_error"), py::arg("state"), py::arg("s"),
      py::arg("u"));
  m.def(
      "pmnn_forward",
      [](const PmnnParams& p, const Vec6& df, double s, double u) {
        WrenchError e;
        e.value = df;
        PhaseState ph;
        ph.s = s;
        ph.u = u;
        return pmnn_forward(p, e, ph);
      },
      py::arg("params"), py::arg("wrench_error"), py::arg("s"), py::arg("u"));
  m.def("loss_ssr", &loss_ssr, py::arg("pred"), py::arg("target"));

  py::class_<TrainingSequence>(m, "TrainingSequence")
      .def(py::init<>())
      .def_readwrite("wrench_error", &TrainingSequence::wrench_error)
      .def_readwrite("phase_s", &TrainingSequence::phase_s)
      .def_readwrite("phase_u", &TrainingSequence::phase_u)
      .def_readwrite("target", &TrainingSequence::target);
  m.def("make_random_sequence", &make_random_sequence, py::arg("steps"),
        py::arg("output_dim"), py::arg("seed"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("clip_grad_norm", &TrainConfig::clip_grad_norm)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("output_dim", &TrainConfig::output_dim)
      .def_readwrite("phase_basis", &TrainConfig::phase_basis)
      .def_readwrite("diagonal_recurrence", &TrainConfig::diagonal_recurrence);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("loss_curve", &TrainResult::loss_curve)
      .def_readonly("final_loss", &TrainResult::final_loss);

  py::enum_<ModelKind>(m, "ModelKind")
      .value("pmdrnn", ModelKind::pmdrnn)
      .value("pmnn", ModelKind::pmnn);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("kind", &Checkpoint::kind)
      .def_readonly("pmdrnn", &Checkpoint::pmdrnn)
      .def_readonly("pmnn", &Checkpoint::pmnn);

  m.def("train_model", &train_model, py::arg("kind"), py::arg("pairs"), py::arg("config"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("checkpoint"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def(
      "grad_check_pmdrnn",
      [](const PmdrnnParams& p, const TrainingSequence& seq, double eps) {
        return grad_check(p, seq, eps);
      },
      py::arg("params"), py::arg("sequence"), py::arg("eps") = 1e-6);
  m.def(
      "grad_check_pmnn",
      [](const PmnnParams& p, const TrainingSequence& seq, double eps) {
        return grad_check(p, seq, eps);
      },
      py::arg("params"), py::arg("sequence"), py::arg("eps") = 1e-6);

  py::class_<ContactConfig>(m, "ContactConfig")
      .def(py::init<>())
      .def_readwrite("normal_stiffness", &ContactConfig::normal_stiffness)
      .def_readwrite("normal_damping", &ContactConfig::normal_damping)
      .def_readwrite("friction", &ContactConfig::friction)
      .def_readwrite("spin_gain", &ContactConfig::spin_gain)
      .def_readwrite("spindle_rpm", &ContactConfig::spindle_rpm)
      .def_readwrite("wheel_radius", &ContactConfig::wheel_radius);

  py::class_<WorkpieceSurface>(m, "WorkpieceSurface")
      .def(py::init<>())
      .def_readwrite("origin", &WorkpieceSurface::origin)
      .def_readwrite("normal", &WorkpieceSurface::normal)
      .def("signed_distance", &WorkpieceSurface::signed_distance, py::arg("point"));

  py::class_<ImpedanceGains>(m, "ImpedanceGains")
      .def(py::init<>())
      .def_readwrite("mass", &ImpedanceGains::mass)
      .def_readwrite("damping", &ImpedanceGains::damping)
      .def_readwrite("stiffness", &ImpedanceGains::stiffness);

  py::class_<EnvPerturbation>(m, "EnvPerturbation")
      .def(py::init<>())
      .def_readwrite("offset", &EnvPerturbation::offset)
      .def_readwrite("tilt_axis", &EnvPerturbation::tilt_axis)
      .def_readwrite("tilt_angle", &EnvPerturbation::tilt_angle)
      .def_readwrite("stiffness_scale", &EnvPerturbation::stiffness_scale);

  py::class_<EnvConfig>(m, "EnvConfig")
      .def(py::init<>())
      .def_readwrite("surface", &EnvConfig::surface)
      .def_readwrite("perturbation", &EnvConfig::perturbation)
      .def_readwrite("contact", &EnvConfig::contact)
      .def_readwrite("gains", &EnvConfig::gains)
      .def_readwrite("substeps", &EnvConfig::substeps);

  m.def("contact_force", &contact_force, py::arg("position"), py::arg("velocity"),
        py::arg("surface"), py::arg("config"));
  m.def(
      "run_episode",
      [](const SkillModel& skill, const EnvConfig& env, double duration, double dt) {
        return run_episode(skill, nullptr, env, duration, dt);
      },
      py::arg("skill"), py::arg("env"), py::arg("duration"), py::arg("dt") = 0.02);
  m.def(
      "run_episode_with_feedback",
      [](const SkillModel& skill, const Checkpoint& ckpt,
         const std::vector<Vec6>& expected_force, const EnvConfig& env, double duration,
         double dt) {
        FeedbackModel model(ckpt);
        FeedbackHookup hookup;
        hookup.model = &model;
        hookup.expected_force = expected_force;
        return run_episode(skill, &hookup, env, duration, dt);
      },
      py::arg("skill"), py::arg("checkpoint"), py::arg("expected_force"), py::arg("env"),
      py::arg("duration"), py::arg("dt") = 0.02);
  m.def("run_scripted_episode", &run_scripted_episode, py::arg("reference"),
        py::arg("orientation"), py::arg("env"), py::arg("dt") = 0.02);

  m.def("build_training_pairs", &build_training_pairs, py::arg("nominal"),
        py::arg("perturbed"), py::arg("corrected"), py::arg("basis_count") = 25);
  m.def("load_dataset_config", &load_dataset_config, py::arg("path"));
  m.def("generate_dataset", &generate_dataset, py::arg("config"), py::arg("out_dir"));
  m.def("load_training_pairs", &load_training_pairs, py::arg("dir"));
}
