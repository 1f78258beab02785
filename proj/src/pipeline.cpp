#include "polishfb/pipeline.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json_io.hpp"
#include "polishfb/log.hpp"
#include "polishfb/svg.hpp"
#include "polishfb/version.hpp"

namespace polishfb {

namespace {

double min_jerk(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

nlohmann::ordered_json vec3_to_json(const Vec3& v) {
  return {v.x(), v.y(), v.z()};
}

Vec3 vec3_from_json(const nlohmann::json& j, const Vec3& fallback = Vec3::Zero()) {
  if (j.is_null()) return fallback;
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::runtime_error("config: expected 3-element vector");
  return Vec3(v[0], v[1], v[2]);
}

nlohmann::ordered_json perturbation_to_json(const EnvPerturbation& p) {
  return {{"offset", vec3_to_json(p.offset)},
          {"tilt_axis", vec3_to_json(p.tilt_axis)},
          {"tilt_angle", p.tilt_angle},
          {"stiffness_scale", p.stiffness_scale}};
}

EnvPerturbation perturbation_from_json(const nlohmann::json& j) {
  EnvPerturbation p;
  if (j.is_null()) return p;
  p.offset = vec3_from_json(j.value("offset", nlohmann::json()), Vec3::Zero());
  p.tilt_axis = vec3_from_json(j.value("tilt_axis", nlohmann::json()), Vec3::UnitX());
  p.tilt_angle = j.value("tilt_angle", 0.0);
  p.stiffness_scale = j.value("stiffness_scale", 1.0);
  p.validate();
  return p;
}

nlohmann::ordered_json env_to_json(const EnvConfig& env) {
  return {{"surface",
           {{"origin", vec3_to_json(env.surface.origin)},
            {"normal", vec3_to_json(env.surface.normal)}}},
          {"contact",
           {{"normal_stiffness", env.contact.normal_stiffness},
            {"normal_damping", env.contact.normal_damping},
            {"friction", env.contact.friction},
            {"spin_gain", env.contact.spin_gain},
            {"spindle_rpm", env.contact.spindle_rpm},
            {"wheel_radius", env.contact.wheel_radius}}},
          {"gains",
           {{"mass", vec3_to_json(env.gains.mass)},
            {"damping", vec3_to_json(env.gains.damping)},
            {"stiffness", vec3_to_json(env.gains.stiffness)}}},
          {"substeps", env.substeps}};
}

EnvConfig env_from_json(const nlohmann::json& j) {
  EnvConfig env;
  if (j.is_null()) return env;
  if (j.contains("surface")) {
    const auto& s = j.at("surface");
    env.surface.origin = vec3_from_json(s.value("origin", nlohmann::json()), Vec3::Zero());
    env.surface.normal =
        vec3_from_json(s.value("normal", nlohmann::json()), Vec3::UnitZ()).normalized();
  }
  if (j.contains("contact")) {
    const auto& c = j.at("contact");
    env.contact.normal_stiffness = c.value("normal_stiffness", 20000.0);
    env.contact.normal_damping = c.value("normal_damping", 50.0);
    env.contact.friction = c.value("friction", 0.3);
    env.contact.spin_gain = c.value("spin_gain", 0.1);
    env.contact.spindle_rpm = c.value("spindle_rpm", 2000.0);
    env.contact.wheel_radius = c.value("wheel_radius", 0.0125);
  }
  if (j.contains("gains")) {
    const auto& g = j.at("gains");
    env.gains.mass = vec3_from_json(g.value("mass", nlohmann::json()), Vec3(2, 2, 2));
    env.gains.damping =
        vec3_from_json(g.value("damping", nlohmann::json()), Vec3(120, 120, 120));
    env.gains.stiffness =
        vec3_from_json(g.value("stiffness", nlohmann::json()), Vec3(5000, 5000, 5000));
  }
  env.substeps = j.value("substeps", 20);
  env.contact.validate();
  env.gains.validate();
  return env;
}

double normal_component(const Vec6& wrench, const Vec3& axis) {
  return wrench.head<3>().dot(axis);
}

std::vector<double> normal_force_profile(const EpisodeRecord& rec, const Vec3& axis) {
  std::vector<double> out(rec.size());
  for (std::size_t k = 0; k < rec.size(); ++k) {
    out[k] = normal_component(rec.samples[k].f, axis);
  }
  return out;
}

double tracking_rmse(const EpisodeRecord& rec, const EpisodeRecord& desired,
                     const Vec3& axis, double horizon) {
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < rec.size() && k < desired.size(); ++k) {
    if (rec.samples[k].t > horizon + 1e-9) break;
    const double e = normal_component(rec.samples[k].f - desired.samples[k].f, axis);
    sq += e * e;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("tracking_rmse: empty horizon");
  return std::sqrt(sq / static_cast<double>(count));
}

void append_double(std::string& out, double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("csv: float format failed");
  out.append(buf.data(), ptr);
}

std::uint64_t to_seed(const nlohmann::json& j, std::uint64_t fallback) {
  return j.is_null() ? fallback : j.get<std::uint64_t>();
}

} // namespace

DatasetConfig load_dataset_config(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("dataset config: cannot open " + path.string());
  nlohmann::json j;
  file >> j;
  if (j.value("kind", "") != "dataset_config" || j.value("format_version", 0) != 1) {
    throw std::runtime_error("dataset config: unsupported document " + path.string());
  }
  DatasetConfig cfg;
  cfg.name = j.value("name", "dataset");
  cfg.seed = to_seed(j.value("seed", nlohmann::json()), 1);
  cfg.dt = j.value("dt", 0.02);
  cfg.duration = j.value("duration", 16.0);
  cfg.sweep_start = vec3_from_json(j.value("sweep_start", nlohmann::json()), Vec3::Zero());
  cfg.sweep_end =
      vec3_from_json(j.value("sweep_end", nlohmann::json()), Vec3(0.12, 0.0, 0.0));
  cfg.force_base = j.value("force_base", 22.5);
  cfg.force_amplitude = j.value("force_amplitude", 1.5);
  cfg.force_period = j.value("force_period", 8.0);
  cfg.approach_time = j.value("approach_time", 2.0);
  cfg.retract_time = j.value("retract_time", 2.0);
  cfg.clearance = j.value("clearance", 0.004);
  cfg.basis_count = j.value("basis_count", 25);
  cfg.env = env_from_json(j.value("env", nlohmann::json()));
  if (j.contains("correction")) {
    const auto& c = j.at("correction");
    cfg.correction.rmse_tolerance = c.value("rmse_tolerance", 0.45);
    cfg.correction.max_iterations = c.value("max_iterations", 60);
    cfg.correction.gain = c.value("gain", 0.8);
  }
  for (const auto& je : j.value("episodes", nlohmann::json::array())) {
    EpisodeSpec spec;
    spec.name = je.at("name").get<std::string>();
    spec.perturbation = perturbation_from_json(je.value("perturbation", nlohmann::json()));
    spec.start_shift = vec3_from_json(je.value("start_shift", nlohmann::json()), Vec3::Zero());
    spec.goal_shift = vec3_from_json(je.value("goal_shift", nlohmann::json()), Vec3::Zero());
    cfg.episodes.push_back(std::move(spec));
  }
  return cfg;
}

void save_dataset_config(const std::filesystem::path& path, const DatasetConfig& cfg) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "dataset_config";
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["dt"] = cfg.dt;
  j["duration"] = cfg.duration;
  j["sweep_start"] = vec3_to_json(cfg.sweep_start);
  j["sweep_end"] = vec3_to_json(cfg.sweep_end);
  j["force_base"] = cfg.force_base;
  j["force_amplitude"] = cfg.force_amplitude;
  j["force_period"] = cfg.force_period;
  j["approach_time"] = cfg.approach_time;
  j["retract_time"] = cfg.retract_time;
  j["clearance"] = cfg.clearance;
  j["basis_count"] = cfg.basis_count;
  j["env"] = env_to_json(cfg.env);
  j["correction"] = {{"rmse_tolerance", cfg.correction.rmse_tolerance},
                     {"max_iterations", cfg.correction.max_iterations},
                     {"gain", cfg.correction.gain}};
  auto episodes = nlohmann::ordered_json::array();
  for (const auto& spec : cfg.episodes) {
    nlohmann::ordered_json je;
    je["name"] = spec.name;
    je["perturbation"] = perturbation_to_json(spec.perturbation);
    if (spec.has_endpoint_shift()) {
      je["start_shift"] = vec3_to_json(spec.start_shift);
      je["goal_shift"] = vec3_to_json(spec.goal_shift);
    }
    episodes.push_back(je);
  }
  j["episodes"] = episodes;
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("dataset config: cannot write " + path.string());
  file << j.dump(2) << '\n';
}

void save_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "dataset_manifest";
  j["name"] = manifest.name;
  j["seed"] = manifest.seed;
  j["dt"] = manifest.dt;
  j["duration"] = manifest.duration;
  j["skill"] = manifest.skill_file;
  j["nominal"] = manifest.nominal_episode;
  auto episodes = nlohmann::ordered_json::array();
  for (const auto& e : manifest.episodes) {
    episodes.push_back({{"name", e.name},
                        {"perturbed", e.perturbed_file},
                        {"nominal", e.nominal_file},
                        {"corrected", e.corrected_file},
                        {"pairs", e.pairs_file}});
  }
  j["episodes"] = episodes;
  const auto path = dir / "manifest.json";
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream file(tmp, std::ios::binary);
    if (!file) throw std::runtime_error("manifest: cannot write " + tmp.string());
    file << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("manifest: cannot open " + path.string());
  nlohmann::json j;
  file >> j;
  if (j.value("kind", "") != "dataset_manifest" || j.value("format_version", 0) != 1) {
    throw std::runtime_error("manifest: unsupported document " + path.string());
  }
  DatasetManifest m;
  m.name = j.value("name", "");
  m.seed = to_seed(j.value("seed", nlohmann::json()), 1);
  m.dt = j.value("dt", 0.02);
  m.duration = j.value("duration", 0.0);
  m.skill_file = j.value("skill", "");
  m.nominal_episode = j.value("nominal", "");
  for (const auto& je : j.value("episodes", nlohmann::json::array())) {
    DatasetManifest::Entry e;
    e.name = je.at("name").get<std::string>();
    e.perturbed_file = je.value("perturbed", "");
    e.nominal_file = je.value("nominal", "");
    e.corrected_file = je.value("corrected", "");
    e.pairs_file = je.value("pairs", "");
    m.episodes.push_back(std::move(e));
  }
  return m;
}

std::vector<Vec3> build_demo_reference(const DatasetConfig& cfg) {
  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt));
  const double contact_start = cfg.approach_time;
  const double contact_end = cfg.duration - cfg.retract_time;
  if (!(contact_end > contact_start)) {
    throw std::invalid_argument("build_demo_reference: no room for the contact pass");
  }
  Vec3 tu, tv;
  cfg.env.surface.tangent_frame(tu, tv);
  const Vec3 n = cfg.env.surface.normal.normalized();
  const double stiffness_along_normal =
      cfg.env.gains.stiffness.dot(n.cwiseProduct(n));
  const double compliance =
      1.0 / cfg.env.contact.normal_stiffness + 1.0 / stiffness_along_normal;

  // commanded depth below the surface that realizes the force profile
  const auto pressed_depth = [&](double t) {
    const double force =
        cfg.force_base + cfg.force_amplitude *
                             std::sin(2.0 * M_PI * (t - contact_start) / cfg.force_period);
    return force * compliance;
  };

  std::vector<Vec3> ref(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    double along_normal;
    double sweep;
    if (t < contact_start) {
      // free-space descent toward the first contact depth
      along_normal = cfg.clearance -
                     (cfg.clearance + pressed_depth(contact_start)) *
                         min_jerk(t / contact_start);
      sweep = 0.0;
    } else if (t <= contact_end) {
      along_normal = -pressed_depth(t);
      sweep = min_jerk((t - contact_start) / (contact_end - contact_start));
    } else {
      along_normal = -pressed_depth(contact_end) +
                     (cfg.clearance + pressed_depth(contact_end)) *
                         min_jerk((t - contact_end) / cfg.retract_time);
      sweep = 1.0;
    }
    const double u =
        cfg.sweep_start.x() + sweep * (cfg.sweep_end.x() - cfg.sweep_start.x());
    const double v =
        cfg.sweep_start.y() + sweep * (cfg.sweep_end.y() - cfg.sweep_start.y());
    ref[k] = cfg.env.surface.origin + u * tu + v * tv + along_normal * n;
  }
  return ref;
}

DatasetManifest record_dataset(const SkillModel& skill, const DatasetConfig& cfg,
                               const std::filesystem::path& out_dir) {
  if (cfg.episodes.empty()) {
    throw std::invalid_argument("record_dataset: need at least one perturbed episode");
  }
  std::set<std::string> names;
  for (const auto& spec : cfg.episodes) {
    if (spec.name.empty() || !names.insert(spec.name).second) {
      throw std::invalid_argument("record_dataset: episode names must be unique");
    }
  }
  std::filesystem::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.name = cfg.name;
  manifest.seed = cfg.seed;
  manifest.dt = cfg.dt;
  manifest.duration = cfg.duration;
  manifest.nominal_episode = "episode_nominal.csv";

  EnvConfig nominal_env = cfg.env;
  nominal_env.perturbation = EnvPerturbation{};

  log_info("recording nominal episode (%s)", cfg.name.c_str());
  const EpisodeRecord nominal =
      run_episode(skill, nullptr, nominal_env, cfg.duration, cfg.dt);
  write_episode_csv(out_dir / manifest.nominal_episode, nominal);

  for (const auto& spec : cfg.episodes) {
    DatasetManifest::Entry entry;
    entry.name = spec.name;
    SkillModel executed = skill;
    entry.nominal_file = manifest.nominal_episode;
    if (spec.has_endpoint_shift()) {
      executed = with_endpoints(skill, skill.position.start + spec.start_shift,
                                skill.position.goal + spec.goal_shift);
      entry.nominal_file = "episode_nominal_" + spec.name + ".csv";
      const EpisodeRecord variant_nominal =
          run_episode(executed, nullptr, nominal_env, cfg.duration, cfg.dt);
      write_episode_csv(out_dir / entry.nominal_file, variant_nominal);
    }
    EnvConfig env = cfg.env;
    env.perturbation = spec.perturbation;
    log_info("recording perturbed episode %s", spec.name.c_str());
    const EpisodeRecord perturbed =
        run_episode(executed, nullptr, env, cfg.duration, cfg.dt);
    entry.perturbed_file = "episode_" + spec.name + ".csv";
    write_episode_csv(out_dir / entry.perturbed_file, perturbed);
    manifest.episodes.push_back(std::move(entry));
  }
  save_manifest(out_dir, manifest);
  return manifest;
}

EpisodeRecord correct_episode(const std::vector<Vec3>& nominal_reference,
                              const UnitQuaternion& orientation,
                              const std::vector<double>& desired_normal_force,
                              const EnvConfig& perturbed_env, double dt,
                              const Vec3& correction_axis,
                              const CorrectionConfig& cfg) {
  if (nominal_reference.size() != desired_normal_force.size()) {
    throw std::invalid_argument("correct_episode: profile length mismatch");
  }
  const Vec3 axis = correction_axis.normalized();
  const double contact_stiffness = perturbed_env.effective_contact().normal_stiffness;
  const double impedance_stiffness =
      perturbed_env.gains.stiffness.dot(axis.cwiseProduct(axis));
  const double series_stiffness = contact_stiffness * impedance_stiffness /
                                  (contact_stiffness + impedance_stiffness);

  // The tracked tool answers a reference change only after the impedance
  // lag; updating each sample from the error it will cause later keeps the
  // iteration from exciting high-frequency modes.
  const double mass = perturbed_env.gains.mass.dot(axis.cwiseProduct(axis));
  const double damping = perturbed_env.gains.damping.dot(axis.cwiseProduct(axis));
  const double lag = mass / damping + damping / impedance_stiffness;
  const std::size_t n = nominal_reference.size();
  const auto lead =
      std::min<std::size_t>(10, static_cast<std::size_t>(std::llround(lag / dt)));

  std::vector<double> delta(n, 0.0);
  std::vector<double> error(n), smoothed_error(n);
  std::vector<Vec3> ref(n);
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    for (std::size_t k = 0; k < n; ++k) {
      ref[k] = nominal_reference[k] + delta[k] * axis;
    }
    const EpisodeRecord rec = run_scripted_episode(ref, orientation, perturbed_env, dt);
    double sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      error[k] = desired_normal_force[k] - normal_component(rec.samples[k].f, axis);
      sq += error[k] * error[k];
    }
    const double rmse = std::sqrt(sq / static_cast<double>(n));
    log_debug("correction iter %d rmse %.4f N", iter, rmse);
    if (rmse <= cfg.rmse_tolerance) return rec;

    // moving average over roughly the lag window
    const std::size_t half = std::max<std::size_t>(1, lead / 2);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t lo = (k >= half) ? k - half : 0;
      const std::size_t hi = std::min(n - 1, k + half);
      double acc = 0.0;
      for (std::size_t i = lo; i <= hi; ++i) acc += error[i];
      smoothed_error[k] = acc / static_cast<double>(hi - lo + 1);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t src = std::min(n - 1, k + lead);
      delta[k] -= cfg.gain * smoothed_error[src] / series_stiffness;
    }
  }
  throw std::runtime_error("correct_episode: correction did not reach " +
                           std::to_string(cfg.rmse_tolerance) + " N RMSE within " +
                           std::to_string(cfg.max_iterations) + " iterations");
}

DatasetManifest generate_dataset(const DatasetConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  EnvConfig nominal_env = cfg.env;
  nominal_env.perturbation = EnvPerturbation{};

  log_info("running demonstration sweep for %s", cfg.name.c_str());
  const std::vector<Vec3> demo_ref = build_demo_reference(cfg);
  const UnitQuaternion tool_orientation; // constant orientation task
  const EpisodeRecord demo =
      run_scripted_episode(demo_ref, tool_orientation, nominal_env, cfg.dt);

  SkillModel skill;
  skill.position = fit_position_dmp(demo, cfg.basis_count);
  skill.orientation = fit_orientation_dmp(demo, cfg.basis_count);

  DatasetManifest manifest = record_dataset(skill, cfg, out_dir);
  manifest.skill_file = "skill.json";
  save_skill(out_dir / manifest.skill_file, skill);
  save_dataset_config(out_dir / "dataset_config.json", cfg);

  const Vec3 axis = cfg.env.surface.normal.normalized();
  for (auto& entry : manifest.episodes) {
    const EpisodeRecord nominal = read_episode_csv(out_dir / entry.nominal_file);
    const EpisodeRecord perturbed = read_episode_csv(out_dir / entry.perturbed_file);
    const auto spec_it =
        std::find_if(cfg.episodes.begin(), cfg.episodes.end(),
                     [&](const EpisodeSpec& s) { return s.name == entry.name; });
    if (spec_it == cfg.episodes.end()) {
      throw std::runtime_error("generate_dataset: manifest entry without spec: " +
                               entry.name);
    }
    EnvConfig env = cfg.env;
    env.perturbation = spec_it->perturbation;

    std::vector<Vec3> nominal_ref(nominal.size());
    for (std::size_t k = 0; k < nominal.size(); ++k) nominal_ref[k] = nominal.samples[k].p;

    log_info("correcting episode %s", entry.name.c_str());
    const EpisodeRecord corrected = correct_episode(
        nominal_ref, tool_orientation, normal_force_profile(nominal, axis), env,
        cfg.dt, axis, cfg.correction);
    entry.corrected_file = "corrected_" + entry.name + ".csv";
    write_episode_csv(out_dir / entry.corrected_file, corrected);

    const TrainingSequence pairs =
        build_training_pairs(nominal, perturbed, corrected, cfg.basis_count);
    entry.pairs_file = "pairs_" + entry.name + ".csv";
    write_pairs_csv(out_dir / entry.pairs_file, pairs);
  }
  save_manifest(out_dir, manifest);
  return manifest;
}

TrainingSequence build_training_pairs(const EpisodeRecord& nominal,
                                      const EpisodeRecord& perturbed,
                                      const EpisodeRecord& corrected,
                                      int basis_count) {
  const std::size_t n = nominal.size();
  if (perturbed.size() != n || corrected.size() != n || n < 3) {
    throw std::invalid_argument("build_training_pairs: episode length mismatch");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(nominal.samples[k].t - perturbed.samples[k].t) > 1e-9 ||
        std::abs(nominal.samples[k].t - corrected.samples[k].t) > 1e-9) {
      throw std::invalid_argument("build_training_pairs: misaligned timestamps");
    }
  }

  const PositionDmp nominal_fit = fit_position_dmp(nominal, basis_count);
  const PositionDmp corrected_fit = fit_position_dmp(corrected, basis_count);

  TrainingSequence seq;
  const auto cols = static_cast<Eigen::Index>(n);
  seq.wrench_error.resize(6, cols);
  seq.phase_s.resize(cols);
  seq.phase_u.resize(cols);
  seq.target.resize(3, cols);

  PhaseState ph = PhaseState::initial(nominal_fit.tau);
  const double alpha_s = canonical_alpha();
  for (std::size_t k = 0; k < n; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    seq.wrench_error.col(col) = perturbed.samples[k].f - nominal.samples[k].f;
    seq.phase_s[col] = ph.s;
    seq.phase_u[col] = ph.u;
    seq.target.col(col) =
        forcing_term(corrected_fit, ph.s) - forcing_term(nominal_fit, ph.s);
    if (k + 1 < n) {
      ph = canonical_step(ph, alpha_s, nominal.samples[k + 1].t - nominal.samples[k].t);
    }
  }
  return seq;
}

void write_pairs_csv(const std::filesystem::path& path, const TrainingSequence& seq) {
  if (seq.target.rows() != 3) {
    throw std::invalid_argument("write_pairs_csv: expects 3-d correction targets");
  }
  std::string out = "s,u,dfx,dfy,dfz,dtx,dty,dtz,cx,cy,cz\n";
  for (Eigen::Index k = 0; k < seq.wrench_error.cols(); ++k) {
    append_double(out, seq.phase_s[k]);
    out += ',';
    append_double(out, seq.phase_u[k]);
    for (Eigen::Index i = 0; i < 6; ++i) {
      out += ',';
      append_double(out, seq.wrench_error(i, k));
    }
    for (Eigen::Index i = 0; i < 3; ++i) {
      out += ',';
      append_double(out, seq.target(i, k));
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("pairs csv: cannot write " + path.string());
  file << out;
}

TrainingSequence read_pairs_csv(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("pairs csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(file, line) || line != "s,u,dfx,dfy,dfz,dtx,dty,dtz,cx,cy,cz") {
    throw std::runtime_error("pairs csv: unexpected header in " + path.string());
  }
  std::vector<std::array<double, 11>> rows;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    std::array<double, 11> v{};
    std::size_t pos = 0;
    for (int i = 0; i < 11; ++i) {
      const std::size_t comma = line.find(',', pos);
      const bool last = (i == 10);
      if (last != (comma == std::string::npos)) {
        throw std::runtime_error("pairs csv: wrong field count in " + path.string());
      }
      const std::size_t end = last ? line.size() : comma;
      const std::string_view field = std::string_view(line).substr(pos, end - pos);
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v[i]);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw std::runtime_error("pairs csv: bad numeric field in " + path.string());
      }
      pos = end + 1;
    }
    rows.push_back(v);
  }
  TrainingSequence seq;
  const auto cols = static_cast<Eigen::Index>(rows.size());
  seq.wrench_error.resize(6, cols);
  seq.phase_s.resize(cols);
  seq.phase_u.resize(cols);
  seq.target.resize(3, cols);
  for (Eigen::Index k = 0; k < cols; ++k) {
    const auto& v = rows[static_cast<std::size_t>(k)];
    seq.phase_s[k] = v[0];
    seq.phase_u[k] = v[1];
    for (int i = 0; i < 6; ++i) seq.wrench_error(i, k) = v[2 + i];
    for (int i = 0; i < 3; ++i) seq.target(i, k) = v[8 + i];
  }
  return seq;
}

TrainingPairs load_training_pairs(const std::filesystem::path& dir) {
  const DatasetManifest manifest = load_manifest(dir);
  TrainingPairs pairs;
  for (const auto& entry : manifest.episodes) {
    if (entry.pairs_file.empty()) {
      throw std::runtime_error("load_training_pairs: manifest has no pairs for " +
                               entry.name);
    }
    pairs.push_back(read_pairs_csv(dir / entry.pairs_file));
  }
  if (pairs.empty()) throw std::runtime_error("load_training_pairs: empty dataset");
  return pairs;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& curve) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    append_double(out, curve[i]);
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("loss csv: cannot write " + path.string());
  file << out;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("train config: cannot open " + path.string());
  nlohmann::json j;
  file >> j;
  if (j.value("kind", "") != "train_config" || j.value("format_version", 0) != 1) {
    throw std::runtime_error("train config: unsupported document " + path.string());
  }
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = to_seed(j.value("seed", nlohmann::json()), cfg.seed);
  cfg.clip_grad_norm = j.value("clip_grad_norm", cfg.clip_grad_norm);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.output_dim = j.value("output_dim", cfg.output_dim);
  cfg.phase_basis = j.value("phase_basis", cfg.phase_basis);
  cfg.diagonal_recurrence = j.value("diagonal_recurrence", cfg.diagonal_recurrence);
  return cfg;
}

CompareOutcome compare_models(const TrainingPairs& pairs, const TrainConfig& cfg) {
  CompareOutcome outcome;
  log_info("training pmdrnn (%d epochs)", cfg.epochs);
  std::tie(outcome.pmdrnn_ckpt, outcome.pmdrnn_result) =
      train_model(ModelKind::pmdrnn, pairs, cfg);
  log_info("training pmnn (%d epochs)", cfg.epochs);
  std::tie(outcome.pmnn_ckpt, outcome.pmnn_result) =
      train_model(ModelKind::pmnn, pairs, cfg);
  return outcome;
}

namespace {

// Training errors reported for the original hardware demonstrations; kept
// in the report header as documentation, not as pass/fail thresholds.
nlohmann::ordered_json reference_training_errors() {
  return {{"note", "training errors reported for the original hardware "
                   "demonstration datasets; simulated values are seed-dependent"},
          {"dataset1", {{"pmdrnn", 0.025}, {"pmnn", 0.16}, {"error_reduction", 0.84}}},
          {"dataset2", {{"pmdrnn", 0.042}, {"pmnn", 0.202}, {"error_reduction", 0.79}}}};
}

// Force-tracking RMSEs reported for the original hardware evaluation.
nlohmann::ordered_json reference_tracking_errors() {
  return {{"note", "force-tracking RMSE reported for the original hardware "
                   "evaluation; simulated values are scenario-dependent"},
          {"full_horizon", {{"pmdrnn", 1.47}, {"pmnn", 1.83}}},
          {"first_12p5_s", {{"pmdrnn", 1.51}, {"pmnn", 2.14}}}};
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},               {"seed", cfg.seed},
          {"clip_grad_norm", cfg.clip_grad_norm}, {"hidden", cfg.hidden},
          {"output_dim", cfg.output_dim},       {"phase_basis", cfg.phase_basis},
          {"diagonal_recurrence", cfg.diagonal_recurrence}};
}

} // namespace

void write_compare_report(const std::filesystem::path& out_dir,
                          const CompareOutcome& outcome, const TrainConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  write_loss_csv(out_dir / "loss_pmdrnn.csv", outcome.pmdrnn_result.loss_curve);
  write_loss_csv(out_dir / "loss_pmnn.csv", outcome.pmnn_result.loss_curve);
  save_checkpoint(out_dir / "pmdrnn.ckpt.json", outcome.pmdrnn_ckpt);
  save_checkpoint(out_dir / "pmnn.ckpt.json", outcome.pmnn_ckpt);

  std::vector<SvgSeries> series(2);
  series[0].label = "PMDRNN";
  series[0].color = "#c23b22";
  series[1].label = "PMNN";
  series[1].color = "#1f6fb2";
  for (std::size_t i = 0; i < outcome.pmdrnn_result.loss_curve.size(); ++i) {
    series[0].x.push_back(static_cast<double>(i + 1));
    series[0].y.push_back(outcome.pmdrnn_result.loss_curve[i]);
  }
  for (std::size_t i = 0; i < outcome.pmnn_result.loss_curve.size(); ++i) {
    series[1].x.push_back(static_cast<double>(i + 1));
    series[1].y.push_back(outcome.pmnn_result.loss_curve[i]);
  }
  write_svg_lineplot(out_dir / "loss_curves.svg", "Training loss", "epoch",
                     "mean per-step SSR", series, std::nullopt, /*log_y=*/true);

  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "compare_report";
  j["reference"] = reference_training_errors();
  j["config"] = train_config_to_json(cfg);
  j["rows"] = nlohmann::ordered_json::array(
      {{{"model", "pmdrnn"},
        {"final_ssr", outcome.pmdrnn_result.final_loss},
        {"epochs", cfg.epochs},
        {"curve_file", "loss_pmdrnn.csv"},
        {"checkpoint", "pmdrnn.ckpt.json"}},
       {{"model", "pmnn"},
        {"final_ssr", outcome.pmnn_result.final_loss},
        {"epochs", cfg.epochs},
        {"curve_file", "loss_pmnn.csv"},
        {"checkpoint", "pmnn.ckpt.json"}}});
  j["error_reduction"] =
      1.0 - outcome.pmdrnn_result.final_loss /
                std::max(outcome.pmnn_result.final_loss, 1e-300);
  std::ofstream file(out_dir / "report.json", std::ios::binary);
  if (!file) throw std::runtime_error("compare report: cannot write report.json");
  file << j.dump(2) << '\n';
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("scenario config: cannot open " + path.string());
  nlohmann::json j;
  file >> j;
  if (j.value("kind", "") != "scenario_config" || j.value("format_version", 0) != 1) {
    throw std::runtime_error("scenario config: unsupported document " + path.string());
  }
  ScenarioConfig cfg;
  cfg.name = j.value("name", "scenario");
  cfg.perturbation = perturbation_from_json(j.value("perturbation", nlohmann::json()));
  cfg.prefix_window = j.value("prefix_window", 12.5);
  return cfg;
}

void save_scenario_config(const std::filesystem::path& path, const ScenarioConfig& cfg) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "scenario_config";
  j["name"] = cfg.name;
  j["perturbation"] = perturbation_to_json(cfg.perturbation);
  j["prefix_window"] = cfg.prefix_window;
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("scenario config: cannot write " + path.string());
  file << j.dump(2) << '\n';
}

ClosedLoopReport evaluate_closed_loop(
    const SkillModel& skill, const EpisodeRecord& nominal_episode,
    const EnvConfig& nominal_env, const ScenarioConfig& scenario,
    const std::vector<std::pair<std::string, Checkpoint>>& models, double dt) {
  if (nominal_episode.size() < 2) {
    throw std::invalid_argument("evaluate_closed_loop: nominal episode too short");
  }
  const double duration = nominal_episode.duration();
  const Vec3 axis = nominal_env.surface.normal.normalized();

  EnvConfig env = nominal_env;
  env.perturbation = scenario.perturbation;

  ClosedLoopReport report;
  report.prefix_window = scenario.prefix_window;

  std::vector<Vec6> expected(nominal_episode.size());
  for (std::size_t k = 0; k < nominal_episode.size(); ++k) {
    expected[k] = nominal_episode.samples[k].f;
  }

  log_info("closed-loop baseline rollout (%s)", scenario.name.c_str());
  RolloutEval baseline;
  baseline.label = "no-feedback";
  baseline.episode = run_episode(skill, nullptr, env, duration, dt);
  baseline.rmse_full = tracking_rmse(baseline.episode, nominal_episode, axis, duration);
  baseline.rmse_prefix =
      tracking_rmse(baseline.episode, nominal_episode, axis, scenario.prefix_window);
  report.rows.push_back(std::move(baseline));

  for (const auto& [label, ckpt] : models) {
    log_info("closed-loop rollout with %s", label.c_str());
    FeedbackModel model(ckpt);
    FeedbackHookup hookup;
    hookup.model = &model;
    hookup.expected_force = expected;
    RolloutEval eval;
    eval.label = label;
    eval.episode = run_episode(skill, &hookup, env, duration, dt);
    eval.rmse_full = tracking_rmse(eval.episode, nominal_episode, axis, duration);
    eval.rmse_prefix =
        tracking_rmse(eval.episode, nominal_episode, axis, scenario.prefix_window);
    report.rows.push_back(std::move(eval));
  }
  return report;
}

void write_closed_loop_report(const std::filesystem::path& out_dir,
                              const ClosedLoopReport& report,
                              const EpisodeRecord& nominal_episode,
                              const Vec3& surface_normal) {
  std::filesystem::create_directories(out_dir);
  const Vec3 axis = surface_normal.normalized();

  std::vector<SvgSeries> series;
  SvgSeries desired;
  desired.label = "desired";
  desired.color = "#2c8a4b";
  for (const auto& s : nominal_episode.samples) {
    desired.x.push_back(s.t);
    desired.y.push_back(normal_component(s.f, axis));
  }
  series.push_back(std::move(desired));
  const std::array<const char*, 3> palette = {"#777777", "#c23b22", "#1f6fb2"};
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    SvgSeries s;
    s.label = report.rows[i].label;
    s.color = palette[std::min(i, palette.size() - 1)];
    for (const auto& sample : report.rows[i].episode.samples) {
      s.x.push_back(sample.t);
      s.y.push_back(normal_component(sample.f, axis));
    }
    series.push_back(std::move(s));
  }
  SvgBand band;
  band.y_low = 20.0;
  band.y_high = 25.0;
  write_svg_lineplot(out_dir / "force_tracking.svg", "Contact force tracking",
                     "time [s]", "normal force [N]", series, band);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  const double baseline = report.rows.empty() ? 0.0 : report.rows.front().rmse_full;
  for (const auto& row : report.rows) {
    nlohmann::ordered_json jr;
    jr["label"] = row.label;
    jr["rmse_full"] = row.rmse_full;
    jr["rmse_prefix"] = row.rmse_prefix;
    if (&row != &report.rows.front() && baseline > 0.0) {
      jr["improvement_vs_baseline"] = 1.0 - row.rmse_full / baseline;
    }
    rows.push_back(jr);
    const auto episode_file = "rollout_" + row.label + ".csv";
    write_episode_csv(out_dir / episode_file, row.episode);
  }

  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "closed_loop_report";
  j["reference"] = reference_tracking_errors();
  j["prefix_window"] = report.prefix_window;
  j["rows"] = rows;
  std::ofstream file(out_dir / "report.json", std::ios::binary);
  if (!file) throw std::runtime_error("closed-loop report: cannot write report.json");
  file << j.dump(2) << '\n';
}

void write_run_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "run_manifest";
  j["command"] = manifest.command;
  j["config"] = manifest.resolved_config;
  j["seed"] = manifest.seed;
  j["tool_version"] = manifest.tool_version.empty() ? kVersion : manifest.tool_version;
  j["outputs"] = manifest.outputs;
  j["wall_seconds"] = manifest.wall_seconds;
  std::filesystem::create_directories(out_dir);
  const auto tmp = out_dir / "run_manifest.json.tmp";
  {
    std::ofstream file(tmp, std::ios::binary);
    if (!file) throw std::runtime_error("run manifest: cannot write " + tmp.string());
    file << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, out_dir / "run_manifest.json");
}

} // namespace polishfb
