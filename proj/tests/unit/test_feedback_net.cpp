#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "polishfb/feedback_net.hpp"

using namespace polishfb;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

PhaseState phase_at(double s, double u) {
  PhaseState ph;
  ph.s = s;
  ph.u = u;
  ph.tau = 1.0;
  return ph;
}

TrainingPairs synthetic_pairs(int sequences, int steps, std::uint64_t seed) {
  TrainingPairs pairs;
  for (int i = 0; i < sequences; ++i) {
    pairs.push_back(make_random_sequence(steps, 3, seed + static_cast<unsigned>(i)));
  }
  return pairs;
}

} // namespace

TEST_CASE("zero networks output zero") {
  PmdrnnParams dr = PmdrnnParams::init(4, 3, 5, 1);
  for (MatX* m : {&dr.w_force, &dr.w_prev1, &dr.w_prev2, &dr.w_reset, &dr.w_update,
                  &dr.w_cand, &dr.u_reset, &dr.u_update, &dr.u_cand, &dr.w_hidden,
                  &dr.w_phase, &dr.w_out}) {
    m->setZero();
  }
  WrenchError df;
  df.value << 1, -2, 3, 0.5, -0.25, 2;
  auto [c, state] = pmdrnn_forward(dr, df, FeedbackState::zero(4, 3), phase_at(0.7, -1.1));
  CHECK(c.norm() == 0.0);

  PmnnParams ff = PmnnParams::init(4, 3, 5, 1);
  ff.w1.setZero();
  ff.w2.setZero();
  ff.w3.setZero();
  ff.w_phase.setZero();
  ff.w_out.setZero();
  CHECK(pmnn_forward(ff, df, phase_at(0.7, -1.1)).norm() == 0.0);
}

TEST_CASE("phase-velocity gate forces zero output") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto seed = static_cast<std::uint64_t>(trial + 1);
    PmdrnnParams dr = PmdrnnParams::init(5, 3, 7, seed);
    PmnnParams ff = PmnnParams::init(5, 3, 7, seed);
    WrenchError df;
    for (int i = 0; i < 6; ++i) df.value[i] = dist(rng);
    FeedbackState state = FeedbackState::zero(5, 3);
    state.h_gru.setConstant(dist(rng));
    state.c_prev1.setConstant(dist(rng));
    const PhaseState gate_closed = phase_at(std::abs(dist(rng)) / 2.5, 0.0);
    auto [c, next] = pmdrnn_forward(dr, df, state, gate_closed);
    CHECK(c.norm() == 0.0);
    CHECK(pmnn_forward(ff, df, gate_closed).norm() == 0.0);
  }
}

TEST_CASE("scalar hand-evaluation oracle, pmdrnn") {
  PmdrnnParams p = PmdrnnParams::init(1, 1, 1, 1);
  for (MatX* m : {&p.w_force, &p.w_prev1, &p.w_prev2, &p.w_reset, &p.w_update,
                  &p.w_cand, &p.u_reset, &p.u_update, &p.u_cand, &p.w_hidden,
                  &p.w_phase, &p.w_out}) {
    m->setConstant(0.1);
  }
  for (VecX* v : {&p.b_input, &p.b_reset, &p.b_update, &p.b_cand, &p.b_hidden,
                  &p.b_phase}) {
    v->setConstant(0.1);
  }
  WrenchError df;
  df.value.setOnes();
  const PhaseState ph = phase_at(0.6, -0.9);

  // scalar chain computed step by step
  const double h_in = std::tanh(0.1 * 6.0 + 0.1 * 0.0 + 0.1 * 0.0 + 0.1);
  const double r = sigmoid(0.1 * h_in + 0.1 * 0.0 + 0.1);
  const double z = sigmoid(0.1 * h_in + 0.1 * 0.0 + 0.1);
  const double hc = std::tanh(0.1 * h_in + 0.1 * (r * 0.0) + 0.1);
  const double h = z * 0.0 + (1.0 - z) * hc;
  const double h1 = sigmoid(0.1 * h + 0.1);
  const double gate = 1.0 * ph.u; // single basis normalizes to 1
  const double hpm = gate * (0.1 * h1 + 0.1);
  const double expected = 0.1 * hpm;

  auto [c, state] = pmdrnn_forward(p, df, FeedbackState::zero(1, 1), ph);
  CHECK(c[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(state.h_gru[0] == doctest::Approx(h).epsilon(1e-14));
  CHECK(state.c_prev1[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(state.c_prev2[0] == 0.0);

  // second step feeds C back through the input layer
  auto [c2, state2] = pmdrnn_forward(p, df, state, ph);
  const double h_in2 = std::tanh(0.1 * 6.0 + 0.1 * expected + 0.1 * 0.0 + 0.1);
  const double r2 = sigmoid(0.1 * h_in2 + 0.1 * h + 0.1);
  const double z2 = sigmoid(0.1 * h_in2 + 0.1 * h + 0.1);
  const double hc2 = std::tanh(0.1 * h_in2 + 0.1 * (r2 * h) + 0.1);
  const double h2 = z2 * h + (1.0 - z2) * hc2;
  const double h12 = sigmoid(0.1 * h2 + 0.1);
  const double expected2 = 0.1 * (gate * (0.1 * h12 + 0.1));
  CHECK(c2[0] == doctest::Approx(expected2).epsilon(1e-14));
  CHECK(state2.c_prev2[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("scalar hand-evaluation oracle, pmnn") {
  PmnnParams p = PmnnParams::init(1, 1, 1, 1);
  for (MatX* m : {&p.w1, &p.w2, &p.w3, &p.w_phase, &p.w_out}) m->setConstant(0.1);
  for (VecX* v : {&p.b1, &p.b2, &p.b3, &p.b_phase}) v->setConstant(0.1);
  WrenchError df;
  df.value.setOnes();
  const PhaseState ph = phase_at(0.4, -1.7);

  const double h1 = sigmoid(0.1 * 6.0 + 0.1);
  const double h2 = sigmoid(0.1 * h1 + 0.1);
  const double h3 = sigmoid(0.1 * h2 + 0.1);
  const double expected = 0.1 * (ph.u * (0.1 * h3 + 0.1));
  CHECK(pmnn_forward(p, df, ph)[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gru gates stay in range") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    PmdrnnParams p = PmdrnnParams::init(6, 3, 5, static_cast<std::uint64_t>(trial + 10));
    FeedbackState state = FeedbackState::zero(6, 3);
    WrenchError df;
    for (int step = 0; step < 20; ++step) {
      for (int i = 0; i < 6; ++i) df.value[i] = dist(rng);
      auto [c, next] = pmdrnn_forward(p, df, state, phase_at(0.5, -1.0));
      // h stays a convex mix of (-1,1) quantities
      CHECK(next.h_gru.lpNorm<Eigen::Infinity>() < 1.0);
      state = next;
    }
  }
}

TEST_CASE("recurrence is confined to FeedbackState and replays bitwise") {
  const PmdrnnParams p = PmdrnnParams::init(8, 3, 9, 42);
  const TrainingSequence seq = make_random_sequence(30, 3, 5);
  std::vector<VecX> first;
  FeedbackState state = FeedbackState::zero(8, 3);
  for (Eigen::Index t = 0; t < 30; ++t) {
    WrenchError df;
    df.value = seq.wrench_error.col(t);
    auto [c, next] = pmdrnn_forward(p, df, state, phase_at(seq.phase_s[t], seq.phase_u[t]));
    first.push_back(c);
    state = next;
  }
  state = FeedbackState::zero(8, 3);
  for (Eigen::Index t = 0; t < 30; ++t) {
    WrenchError df;
    df.value = seq.wrench_error.col(t);
    auto [c, next] = pmdrnn_forward(p, df, state, phase_at(seq.phase_s[t], seq.phase_u[t]));
    CHECK((c - first[static_cast<std::size_t>(t)]).norm() == 0.0);
    state = next;
  }
}

TEST_CASE("loss_ssr") {
  std::vector<VecX> a(3, VecX::Zero(3));
  std::vector<VecX> b = a;
  CHECK(loss_ssr(a, b) == 0.0);

  b[1] = VecX::Zero(3);
  b[1][0] = 1.0;
  CHECK(loss_ssr(a, b) == doctest::Approx(1.0));

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<VecX> pred, target;
  double expected = 0.0;
  for (int t = 0; t < 10; ++t) {
    VecX p(4), q(4);
    for (int i = 0; i < 4; ++i) {
      p[i] = dist(rng);
      q[i] = dist(rng);
      expected += (p[i] - q[i]) * (p[i] - q[i]);
    }
    pred.push_back(p);
    target.push_back(q);
  }
  CHECK(loss_ssr(pred, target) == doctest::Approx(expected).epsilon(1e-12));

  pred.pop_back();
  CHECK_THROWS_AS(loss_ssr(pred, target), std::invalid_argument);
}

TEST_CASE("gradient check against central differences") {
  const TrainingSequence seq = make_random_sequence(5, 2, 77);
  const PmdrnnParams dr = PmdrnnParams::init(4, 2, 5, 3);
  CHECK(grad_check(dr, seq, 1e-6) < 1e-5);
  const PmnnParams ff = PmnnParams::init(4, 2, 5, 3);
  CHECK(grad_check(ff, seq, 1e-6) < 1e-5);

  CHECK_THROWS_AS(grad_check(ff, seq, 1e-2), std::invalid_argument);

  // zero parameters, zero inputs, zero targets: a stationary point
  PmdrnnParams zero = PmdrnnParams::init(3, 2, 4, 1);
  for (MatX* m : {&zero.w_force, &zero.w_prev1, &zero.w_prev2, &zero.w_reset,
                  &zero.w_update, &zero.w_cand, &zero.u_reset, &zero.u_update,
                  &zero.u_cand, &zero.w_hidden, &zero.w_phase, &zero.w_out}) {
    m->setZero();
  }
  TrainingSequence silent = make_random_sequence(5, 2, 1);
  silent.wrench_error.setZero();
  silent.target.setZero();
  CHECK(grad_check(zero, silent, 1e-6) == doctest::Approx(0.0));
}

TEST_CASE("gradient check with diagonal recurrence constraint") {
  const TrainingSequence seq = make_random_sequence(6, 2, 11);
  const PmdrnnParams dr = PmdrnnParams::init(4, 2, 5, 9, /*diagonal_recurrence=*/true);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c)
      if (r != c) CHECK(dr.u_reset(r, c) == 0.0);
  CHECK(grad_check(dr, seq, 1e-6) < 1e-5);
}

TEST_CASE("normalizer: z-scored inputs, scale-only targets") {
  const TrainingPairs pairs = synthetic_pairs(3, 50, 2);
  const Normalizer norm = Normalizer::fit(pairs, 3);
  const TrainingPairs scaled = norm.apply(pairs);

  Vec6 mean = Vec6::Zero();
  Eigen::Index count = 0;
  for (const auto& seq : scaled) {
    mean += seq.wrench_error.rowwise().sum();
    count += seq.wrench_error.cols();
  }
  mean /= static_cast<double>(count);
  CHECK(mean.lpNorm<Eigen::Infinity>() < 1e-12);

  // scale-only target mapping keeps zero at zero
  CHECK(norm.denormalize_output(VecX::Zero(3)).norm() == 0.0);
  const VecX ones = norm.denormalize_output(VecX::Ones(3));
  for (int i = 0; i < 3; ++i) CHECK(ones[i] == doctest::Approx(norm.target_scale[i]));
}

TEST_CASE("training: trivially fittable targets and determinism") {
  TrainingPairs pairs = synthetic_pairs(3, 40, 4);
  for (auto& seq : pairs) seq.target.setZero();
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.hidden = 6;
  cfg.phase_basis = 6;
  cfg.batch_size = 8;
  cfg.seed = 5;

  PmdrnnParams params =
      PmdrnnParams::init(cfg.hidden, cfg.output_dim, cfg.phase_basis, cfg.seed);
  // zero targets are not normalizable; train on the raw pairs directly
  const TrainResult result = train(params, pairs, cfg);
  REQUIRE(result.loss_curve.size() == 60);
  CHECK(result.final_loss < result.loss_curve.front());

  PmdrnnParams again =
      PmdrnnParams::init(cfg.hidden, cfg.output_dim, cfg.phase_basis, cfg.seed);
  const TrainResult rerun = train(again, pairs, cfg);
  REQUIRE(rerun.loss_curve.size() == result.loss_curve.size());
  for (std::size_t i = 0; i < rerun.loss_curve.size(); ++i) {
    CHECK(rerun.loss_curve[i] == result.loss_curve[i]); // bit-identical
  }
}

TEST_CASE("training: loss does not blow up over 100-epoch windows") {
  const TrainingPairs raw = synthetic_pairs(4, 60, 8);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.hidden = 8;
  cfg.phase_basis = 8;
  cfg.seed = 3;
  cfg.clip_grad_norm = 5.0;
  auto [ckpt, result] = train_model(ModelKind::pmdrnn, raw, cfg);
  for (std::size_t e = 0; e + 100 < result.loss_curve.size(); ++e) {
    CHECK(result.loss_curve[e + 100] <= 1.05 * result.loss_curve[e]);
  }
}

TEST_CASE("training: diagonal recurrence stays diagonal") {
  const TrainingPairs raw = synthetic_pairs(2, 30, 12);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.hidden = 5;
  cfg.phase_basis = 5;
  cfg.diagonal_recurrence = true;
  auto [ckpt, result] = train_model(ModelKind::pmdrnn, raw, cfg);
  for (Eigen::Index r = 0; r < 5; ++r)
    for (Eigen::Index c = 0; c < 5; ++c)
      if (r != c) {
        CHECK(ckpt.pmdrnn.u_reset(r, c) == 0.0);
        CHECK(ckpt.pmdrnn.u_update(r, c) == 0.0);
        CHECK(ckpt.pmdrnn.u_cand(r, c) == 0.0);
      }
}

TEST_CASE("train rejects bad input") {
  TrainConfig cfg;
  cfg.epochs = 1;
  PmdrnnParams params = PmdrnnParams::init(4, 3, 5, 1);
  CHECK_THROWS_AS(train(params, TrainingPairs{}, cfg), std::invalid_argument);

  TrainingPairs mismatched = synthetic_pairs(1, 10, 1);
  mismatched[0].target.resize(2, 10); // wrong output dim
  CHECK_THROWS_AS(train(params, mismatched, cfg), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const TrainingPairs raw = synthetic_pairs(2, 25, 31);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.hidden = 5;
  cfg.phase_basis = 6;
  auto [ckpt, result] = train_model(ModelKind::pmdrnn, raw, cfg);

  const auto dir = std::filesystem::temp_directory_path() / "polishfb_ckpt_rt";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.json", ckpt);
  const Checkpoint loaded = load_checkpoint(dir / "a.json");
  save_checkpoint(dir / "b.json", loaded);

  std::ifstream fa(dir / "a.json", std::ios::binary);
  std::ifstream fb(dir / "b.json", std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)),
                       std::istreambuf_iterator<char>());
  const std::string bb((std::istreambuf_iterator<char>(fb)),
                       std::istreambuf_iterator<char>());
  CHECK(ba == bb);
  CHECK(loaded.pmdrnn.w_out == ckpt.pmdrnn.w_out);
  CHECK(loaded.norm.target_scale == ckpt.norm.target_scale);

  // a pmnn checkpoint round-trips as well
  auto [ff, ffres] = train_model(ModelKind::pmnn, raw, cfg);
  save_checkpoint(dir / "c.json", ff);
  const Checkpoint ff2 = load_checkpoint(dir / "c.json");
  CHECK(ff2.pmnn.w2 == ff.pmnn.w2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("feedback model wrapper preserves the phase gate end to end") {
  const TrainingPairs raw = synthetic_pairs(2, 25, 6);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.hidden = 5;
  cfg.phase_basis = 6;
  auto [ckpt, result] = train_model(ModelKind::pmdrnn, raw, cfg);
  FeedbackModel model(ckpt);
  Vec6 df;
  df << 4, -2, 8, 0.1, 0.2, -0.3;
  const VecX c = model.correction(df, phase_at(0.5, 0.0));
  CHECK(c.norm() == 0.0);
}
