#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

const char* cli_path() { return std::getenv("POLISHFB_CLI"); }

struct Run {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

Run run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(cli_path()) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_tiny_config(const fs::path& dir) {
  nlohmann::json cfg = {
      {"format_version", 1},
      {"kind", "dataset_config"},
      {"name", "cli_tiny"},
      {"seed", 1},
      {"dt", 0.02},
      {"duration", 5.0},
      {"approach_time", 1.0},
      {"retract_time", 1.0},
      {"force_period", 4.0},
      {"env",
       {{"gains",
         {{"mass", {5.0, 5.0, 5.0}},
          {"damping", {140.0, 140.0, 140.0}},
          {"stiffness", {3500.0, 3500.0, 3500.0}}}},
        {"contact", {{"normal_damping", 150.0}}}}},
      {"episodes",
       {{{"name", "up"}, {"perturbation", {{"offset", {0.0, 0.0, 0.0012}}}}},
        {{"name", "tilt"},
         {"perturbation",
          {{"tilt_axis", {0.0, 1.0, 0.0}}, {"tilt_angle", 0.01}}}}}}};
  const fs::path path = dir / "tiny.json";
  std::ofstream f(path);
  f << cfg.dump(2);
  return path;
}

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag)
      : path(fs::temp_directory_path() / ("polishfb_cli_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("cli: help exits zero and documents subcommands") {
  REQUIRE(cli_path() != nullptr);
  Scratch scratch("help");
  const Run r = run_cli("--help", scratch.path);
  CHECK(r.exit_code == 0);
  for (const char* sub : {"demo", "train", "compare", "rollout", "gradcheck"}) {
    CHECK(r.out.find(sub) != std::string::npos);
  }
  const Run sub_help = run_cli("train --help", scratch.path);
  CHECK(sub_help.exit_code == 0);
  CHECK(sub_help.out.find("--seed") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 1, runtime errors exit 2 naming the path") {
  Scratch scratch("errors");
  const Run usage = run_cli("demo --out " + (scratch.path / "o").string(), scratch.path);
  CHECK(usage.exit_code == 1); // --config is required

  const fs::path missing = scratch.path / "no_such_config.json";
  const Run runtime = run_cli(
      "demo --config " + missing.string() + " --out " + (scratch.path / "o").string(),
      scratch.path);
  CHECK(runtime.exit_code == 2);
  CHECK(runtime.err.find("no_such_config.json") != std::string::npos);
}

TEST_CASE("cli: demo writes episodes deterministically under a fixed seed") {
  Scratch scratch("demo");
  const fs::path cfg = write_tiny_config(scratch.path);

  const Run first = run_cli("demo --config " + cfg.string() + " --out " +
                                (scratch.path / "a").string() + " --seed 42",
                            scratch.path);
  REQUIRE(first.exit_code == 0);
  int episode_files = 0;
  for (const auto& entry : fs::directory_iterator(scratch.path / "a")) {
    if (entry.path().filename().string().rfind("episode_", 0) == 0) ++episode_files;
  }
  CHECK(episode_files == 3); // nominal + two perturbed

  const Run second = run_cli("demo --config " + cfg.string() + " --out " +
                                 (scratch.path / "b").string() + " --seed 42",
                             scratch.path);
  REQUIRE(second.exit_code == 0);
  for (const auto& entry : fs::directory_iterator(scratch.path / "a")) {
    const auto name = entry.path().filename().string();
    if (name == "run_manifest.json") continue; // carries wall-clock time
    CHECK(slurp(entry.path()) == slurp(scratch.path / "b" / name));
  }
}

TEST_CASE("cli: train respects --epochs and emits matching artifacts") {
  Scratch scratch("train");
  const fs::path cfg = write_tiny_config(scratch.path);
  const fs::path data = scratch.path / "data";
  REQUIRE(run_cli("demo --config " + cfg.string() + " --out " + data.string(),
                  scratch.path)
              .exit_code == 0);

  const fs::path out = scratch.path / "train";
  const Run r = run_cli("train --pairs " + data.string() +
                            " --model pmdrnn --epochs 1 --out " + out.string(),
                        scratch.path);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(out / "pmdrnn.ckpt.json"));

  std::ifstream loss(out / "loss_pmdrnn.csv");
  std::string line;
  std::getline(loss, line);
  int rows = 0;
  while (std::getline(loss, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1);

  // the pmnn route produces the same artifact schema
  const fs::path out2 = scratch.path / "train2";
  const Run r2 = run_cli("train --pairs " + data.string() +
                             " --model pmnn --epochs 1 --out " + out2.string(),
                         scratch.path);
  REQUIRE(r2.exit_code == 0);
  CHECK(fs::exists(out2 / "pmnn.ckpt.json"));
  CHECK(fs::exists(out2 / "loss_pmnn.csv"));
  CHECK(fs::exists(out2 / "run_manifest.json"));
}

TEST_CASE("cli: gradcheck reports a small max relative error") {
  Scratch scratch("gradcheck");
  for (const char* model : {"pmdrnn", "pmnn"}) {
    const Run r = run_cli(std::string("gradcheck --model ") + model + " --out " +
                              (scratch.path / model).string(),
                          scratch.path);
    REQUIRE(r.exit_code == 0);
    const auto pos = r.out.find("max relative gradient error: ");
    REQUIRE(pos != std::string::npos);
    const double value = std::stod(r.out.substr(pos + 29));
    CHECK(value < 1e-5);
  }
}

TEST_CASE("cli: rollout compares baseline and trained model") {
  Scratch scratch("rollout");
  const fs::path cfg = write_tiny_config(scratch.path);
  const fs::path data = scratch.path / "data";
  REQUIRE(run_cli("demo --config " + cfg.string() + " --out " + data.string(),
                  scratch.path)
              .exit_code == 0);
  const fs::path train_out = scratch.path / "train";
  REQUIRE(run_cli("train --pairs " + data.string() +
                      " --model pmdrnn --epochs 40 --out " + train_out.string(),
                  scratch.path)
              .exit_code == 0);

  nlohmann::json scenario = {
      {"format_version", 1},
      {"kind", "scenario_config"},
      {"name", "cli_eval"},
      {"perturbation", {{"offset", {0.0, 0.0, 0.001}}}},
      {"prefix_window", 2.0}};
  const fs::path scen = scratch.path / "scenario.json";
  std::ofstream(scen) << scenario.dump(2);

  const fs::path out = scratch.path / "roll";
  const Run r = run_cli("rollout --dataset " + data.string() + " --scenario " +
                            scen.string() + " --feedback " +
                            (train_out / "pmdrnn.ckpt.json").string() + " --out " +
                            out.string(),
                        scratch.path);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("no-feedback") != std::string::npos);
  CHECK(r.out.find("pmdrnn") != std::string::npos);
  const std::string report = slurp(out / "report.json");
  CHECK(report.find("no-feedback") != std::string::npos);
  CHECK(report.find("rmse_full") != std::string::npos);
}
