#include "polishfb/feedback_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "json_io.hpp"

namespace polishfb {

namespace {

inline VecX sigmoid(const VecX& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline VecX tanh_vec(const VecX& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

struct ParamView {
  const char* name;
  double* data;
  Eigen::Index size;
  bool recurrent = false; // subject to the diagonal-recurrence constraint
};

std::vector<ParamView> param_views(PmdrnnParams& p) {
  auto m = [](const char* n, MatX& w, bool rec = false) {
    return ParamView{n, w.data(), w.size(), rec};
  };
  auto v = [](const char* n, VecX& w) { return ParamView{n, w.data(), w.size(), false}; };
  return {
      m("w_force", p.w_force),   m("w_prev1", p.w_prev1),
      m("w_prev2", p.w_prev2),   v("b_input", p.b_input),
      m("w_reset", p.w_reset),   m("w_update", p.w_update),
      m("w_cand", p.w_cand),     m("u_reset", p.u_reset, true),
      m("u_update", p.u_update, true), m("u_cand", p.u_cand, true),
      v("b_reset", p.b_reset),   v("b_update", p.b_update),
      v("b_cand", p.b_cand),     m("w_hidden", p.w_hidden),
      v("b_hidden", p.b_hidden), m("w_phase", p.w_phase),
      v("b_phase", p.b_phase),   m("w_out", p.w_out),
  };
}

std::vector<ParamView> param_views(PmnnParams& p) {
  auto m = [](const char* n, MatX& w) { return ParamView{n, w.data(), w.size(), false}; };
  auto v = [](const char* n, VecX& w) { return ParamView{n, w.data(), w.size(), false}; };
  return {
      m("w1", p.w1),           v("b1", p.b1),
      m("w2", p.w2),           v("b2", p.b2),
      m("w3", p.w3),           v("b3", p.b3),
      m("w_phase", p.w_phase), v("b_phase", p.b_phase),
      m("w_out", p.w_out),
  };
}

MatX glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatX w(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) w(r, c) = dist(rng);
  return w;
}

template <class Model>
Model zeros_like(const Model& p) {
  Model z = p;
  for (auto& view : param_views(z)) {
    Eigen::Map<VecX>(view.data, view.size).setZero();
  }
  return z;
}

void zero_off_diagonal(MatX& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (r != c) m(r, c) = 0.0;
}

VecX phase_gate(const RbfBasis& rbf, const PhaseState& ph) {
  return rbf.normalized(ph.s) * ph.u;
}

void check_sequence(const TrainingSequence& seq, int output_dim) {
  const Eigen::Index steps = seq.wrench_error.cols();
  if (seq.wrench_error.rows() != 6 || seq.target.rows() != output_dim ||
      seq.target.cols() != steps || seq.phase_s.size() != steps ||
      seq.phase_u.size() != steps || steps == 0) {
    throw std::invalid_argument("training sequence: inconsistent shapes");
  }
}

// ---------------------------------------------------------------------------
// Cached sequence passes. Columns index time steps; the caches persist
// across epochs so the hot loop does no allocation.

struct PmdrnnCache {
  MatX x;                        // 6 x T, normalized inputs
  MatX h_in, r, zt, hc, h, h1;   // hidden x T
  MatX a_pm, gate, hpm;          // phase_basis x T
  MatX c;                        // output_dim x T
  MatX dc;                       // output_dim x T, backward scratch

  void resize(const PmdrnnParams& p, Eigen::Index steps) {
    x.resize(6, steps);
    for (MatX* m : {&h_in, &r, &zt, &hc, &h, &h1}) m->resize(p.hidden, steps);
    for (MatX* m : {&a_pm, &gate, &hpm}) m->resize(p.phase_basis, steps);
    c.resize(p.output_dim, steps);
    dc.resize(p.output_dim, steps);
  }
};

double pmdrnn_forward_seq(const PmdrnnParams& p, const TrainingSequence& seq,
                          PmdrnnCache& cache) {
  const Eigen::Index steps = seq.wrench_error.cols();
  cache.resize(p, steps);
  cache.x = seq.wrench_error;
  const VecX zero_h = VecX::Zero(p.hidden);
  const VecX zero_c = VecX::Zero(p.output_dim);
  double ssr = 0.0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const VecX hprev = (t > 0) ? VecX(cache.h.col(t - 1)) : zero_h;
    const VecX c1 = (t > 0) ? VecX(cache.c.col(t - 1)) : zero_c;
    const VecX c2 = (t > 1) ? VecX(cache.c.col(t - 2)) : zero_c;

    cache.h_in.col(t) = tanh_vec(p.w_force * cache.x.col(t) + p.w_prev1 * c1 +
                                 p.w_prev2 * c2 + p.b_input);
    const auto h_in = cache.h_in.col(t);
    cache.r.col(t) = sigmoid(p.w_reset * h_in + p.u_reset * hprev + p.b_reset);
    cache.zt.col(t) = sigmoid(p.w_update * h_in + p.u_update * hprev + p.b_update);
    cache.hc.col(t) = tanh_vec(p.w_cand * h_in +
                               p.u_cand * cache.r.col(t).cwiseProduct(hprev) +
                               p.b_cand);
    cache.h.col(t) = cache.zt.col(t).cwiseProduct(hprev) +
                     (1.0 - cache.zt.col(t).array()).matrix().cwiseProduct(cache.hc.col(t));
    cache.h1.col(t) = sigmoid(p.w_hidden * cache.h.col(t) + p.b_hidden);
    cache.a_pm.col(t) = p.w_phase * cache.h1.col(t) + p.b_phase;
    PhaseState ph;
    ph.s = seq.phase_s[t];
    ph.u = seq.phase_u[t];
    cache.gate.col(t) = phase_gate(p.phase_rbf, ph);
    cache.hpm.col(t) = cache.gate.col(t).cwiseProduct(cache.a_pm.col(t));
    cache.c.col(t) = p.w_out * cache.hpm.col(t);
    ssr += (cache.c.col(t) - seq.target.col(t)).squaredNorm();
  }
  return ssr;
}

void pmdrnn_backward_seq(const PmdrnnParams& p, const TrainingSequence& seq,
                         PmdrnnCache& cache, PmdrnnParams& g) {
  const Eigen::Index steps = seq.wrench_error.cols();
  const VecX zero_h = VecX::Zero(p.hidden);
  const VecX zero_c = VecX::Zero(p.output_dim);
  cache.dc = 2.0 * (cache.c - seq.target);
  VecX gh_next = VecX::Zero(p.hidden);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const VecX hprev = (t > 0) ? VecX(cache.h.col(t - 1)) : zero_h;
    const VecX c1 = (t > 0) ? VecX(cache.c.col(t - 1)) : zero_c;
    const VecX c2 = (t > 1) ? VecX(cache.c.col(t - 2)) : zero_c;

    const VecX g_c = cache.dc.col(t);
    g.w_out.noalias() += g_c * cache.hpm.col(t).transpose();
    const VecX g_hpm = p.w_out.transpose() * g_c;
    const VecX g_apm = g_hpm.cwiseProduct(cache.gate.col(t));
    g.w_phase.noalias() += g_apm * cache.h1.col(t).transpose();
    g.b_phase += g_apm;
    const VecX g_h1 = p.w_phase.transpose() * g_apm;
    const VecX g_a1 = g_h1.cwiseProduct(cache.h1.col(t).cwiseProduct(
        (1.0 - cache.h1.col(t).array()).matrix()));
    g.w_hidden.noalias() += g_a1 * cache.h.col(t).transpose();
    g.b_hidden += g_a1;

    const VecX g_h = p.w_hidden.transpose() * g_a1 + gh_next;
    const VecX g_z = g_h.cwiseProduct(hprev - cache.hc.col(t));
    const VecX g_hc = g_h.cwiseProduct((1.0 - cache.zt.col(t).array()).matrix());
    VecX g_hprev = g_h.cwiseProduct(cache.zt.col(t));

    const VecX g_ac = g_hc.cwiseProduct(
        (1.0 - cache.hc.col(t).array().square()).matrix());
    g.w_cand.noalias() += g_ac * cache.h_in.col(t).transpose();
    g.u_cand.noalias() += g_ac * cache.r.col(t).cwiseProduct(hprev).transpose();
    g.b_cand += g_ac;
    const VecX g_rh = p.u_cand.transpose() * g_ac;
    const VecX g_r = g_rh.cwiseProduct(hprev);
    g_hprev += g_rh.cwiseProduct(cache.r.col(t));

    const VecX g_ar = g_r.cwiseProduct(cache.r.col(t).cwiseProduct(
        (1.0 - cache.r.col(t).array()).matrix()));
    g.w_reset.noalias() += g_ar * cache.h_in.col(t).transpose();
    g.u_reset.noalias() += g_ar * hprev.transpose();
    g.b_reset += g_ar;
    g_hprev.noalias() += p.u_reset.transpose() * g_ar;

    const VecX g_az = g_z.cwiseProduct(cache.zt.col(t).cwiseProduct(
        (1.0 - cache.zt.col(t).array()).matrix()));
    g.w_update.noalias() += g_az * cache.h_in.col(t).transpose();
    g.u_update.noalias() += g_az * hprev.transpose();
    g.b_update += g_az;
    g_hprev.noalias() += p.u_update.transpose() * g_az;

    const VecX g_hin = p.w_reset.transpose() * g_ar + p.w_update.transpose() * g_az +
                       p.w_cand.transpose() * g_ac;
    const VecX g_ain = g_hin.cwiseProduct(
        (1.0 - cache.h_in.col(t).array().square()).matrix());
    g.w_force.noalias() += g_ain * cache.x.col(t).transpose();
    g.b_input += g_ain;
    if (t >= 1) {
      g.w_prev1.noalias() += g_ain * c1.transpose();
      cache.dc.col(t - 1).noalias() += p.w_prev1.transpose() * g_ain;
    }
    if (t >= 2) {
      g.w_prev2.noalias() += g_ain * c2.transpose();
      cache.dc.col(t - 2).noalias() += p.w_prev2.transpose() * g_ain;
    }
    gh_next = g_hprev;
  }
}

struct PmnnCache {
  MatX x;              // 6 x T
  MatX h1, h2, h3;     // hidden x T
  MatX a_pm, gate, hpm;
  MatX c;

  void resize(const PmnnParams& p, Eigen::Index steps) {
    x.resize(6, steps);
    for (MatX* m : {&h1, &h2, &h3}) m->resize(p.hidden, steps);
    for (MatX* m : {&a_pm, &gate, &hpm}) m->resize(p.phase_basis, steps);
    c.resize(p.output_dim, steps);
  }
};

double pmnn_forward_seq(const PmnnParams& p, const TrainingSequence& seq,
                        PmnnCache& cache) {
  const Eigen::Index steps = seq.wrench_error.cols();
  cache.resize(p, steps);
  cache.x = seq.wrench_error;
  double ssr = 0.0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    cache.h1.col(t) = sigmoid(p.w1 * cache.x.col(t) + p.b1);
    cache.h2.col(t) = sigmoid(p.w2 * cache.h1.col(t) + p.b2);
    cache.h3.col(t) = sigmoid(p.w3 * cache.h2.col(t) + p.b3);
    cache.a_pm.col(t) = p.w_phase * cache.h3.col(t) + p.b_phase;
    PhaseState ph;
    ph.s = seq.phase_s[t];
    ph.u = seq.phase_u[t];
    cache.gate.col(t) = phase_gate(p.phase_rbf, ph);
    cache.hpm.col(t) = cache.gate.col(t).cwiseProduct(cache.a_pm.col(t));
    cache.c.col(t) = p.w_out * cache.hpm.col(t);
    ssr += (cache.c.col(t) - seq.target.col(t)).squaredNorm();
  }
  return ssr;
}

void pmnn_backward_seq(const PmnnParams& p, const TrainingSequence& seq,
                       PmnnCache& cache, PmnnParams& g) {
  const Eigen::Index steps = seq.wrench_error.cols();
  for (Eigen::Index t = 0; t < steps; ++t) {
    const VecX g_c = 2.0 * (cache.c.col(t) - seq.target.col(t));
    g.w_out.noalias() += g_c * cache.hpm.col(t).transpose();
    const VecX g_hpm = p.w_out.transpose() * g_c;
    const VecX g_apm = g_hpm.cwiseProduct(cache.gate.col(t));
    g.w_phase.noalias() += g_apm * cache.h3.col(t).transpose();
    g.b_phase += g_apm;
    const VecX g_h3 = p.w_phase.transpose() * g_apm;
    const VecX g_a3 = g_h3.cwiseProduct(cache.h3.col(t).cwiseProduct(
        (1.0 - cache.h3.col(t).array()).matrix()));
    g.w3.noalias() += g_a3 * cache.h2.col(t).transpose();
    g.b3 += g_a3;
    const VecX g_h2 = p.w3.transpose() * g_a3;
    const VecX g_a2 = g_h2.cwiseProduct(cache.h2.col(t).cwiseProduct(
        (1.0 - cache.h2.col(t).array()).matrix()));
    g.w2.noalias() += g_a2 * cache.h1.col(t).transpose();
    g.b2 += g_a2;
    const VecX g_h1 = p.w2.transpose() * g_a2;
    const VecX g_a1 = g_h1.cwiseProduct(cache.h1.col(t).cwiseProduct(
        (1.0 - cache.h1.col(t).array()).matrix()));
    g.w1.noalias() += g_a1 * cache.x.col(t).transpose();
    g.b1 += g_a1;
  }
}

template <class Model>
struct NetOps;

template <>
struct NetOps<PmdrnnParams> {
  using Cache = PmdrnnCache;
  static double forward(const PmdrnnParams& p, const TrainingSequence& s, Cache& c) {
    return pmdrnn_forward_seq(p, s, c);
  }
  static void backward(const PmdrnnParams& p, const TrainingSequence& s, Cache& c,
                       PmdrnnParams& g) {
    pmdrnn_backward_seq(p, s, c, g);
  }
  static void apply_constraints(PmdrnnParams& g, const PmdrnnParams& p) {
    if (p.diagonal_recurrence) {
      zero_off_diagonal(g.u_reset);
      zero_off_diagonal(g.u_update);
      zero_off_diagonal(g.u_cand);
    }
  }
};

template <>
struct NetOps<PmnnParams> {
  using Cache = PmnnCache;
  static double forward(const PmnnParams& p, const TrainingSequence& s, Cache& c) {
    return pmnn_forward_seq(p, s, c);
  }
  static void backward(const PmnnParams& p, const TrainingSequence& s, Cache& c,
                       PmnnParams& g) {
    pmnn_backward_seq(p, s, c, g);
  }
  static void apply_constraints(PmnnParams&, const PmnnParams&) {}
};

template <class Model>
TrainResult train_impl(Model& params, const TrainingPairs& data, const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  params.validate();
  for (const auto& seq : data) check_sequence(seq, params.output_dim);

  const auto n = data.size();
  const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  std::vector<typename NetOps<Model>::Cache> caches(n);
  Model grads = zeros_like(params);
  auto grad_views = param_views(grads);
  auto theta_views = param_views(params);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5bf03635f0a3d7d1ULL);

  TrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (n > batch) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_ssr = 0.0;
    Eigen::Index epoch_steps = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      for (auto& view : grad_views) Eigen::Map<VecX>(view.data, view.size).setZero();
      Eigen::Index batch_steps = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto idx = order[i];
        const double ssr = NetOps<Model>::forward(params, data[idx], caches[idx]);
        if (!std::isfinite(ssr)) {
          throw std::runtime_error("train: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", sequence " +
                                   std::to_string(idx));
        }
        NetOps<Model>::backward(params, data[idx], caches[idx], grads);
        epoch_ssr += ssr;
        batch_steps += data[idx].wrench_error.cols();
      }
      epoch_steps += batch_steps;
      NetOps<Model>::apply_constraints(grads, params);

      // objective: mean over the batch sequences of the per-sequence SSR
      double scale = 1.0 / static_cast<double>(end - begin);
      if (cfg.clip_grad_norm > 0.0) {
        double sq = 0.0;
        for (const auto& view : grad_views) {
          sq += Eigen::Map<const VecX>(view.data, view.size).squaredNorm();
        }
        const double norm = std::sqrt(sq) * scale;
        if (norm > cfg.clip_grad_norm) scale *= cfg.clip_grad_norm / norm;
      }
      const double step = cfg.learning_rate * scale;
      for (std::size_t v = 0; v < theta_views.size(); ++v) {
        Eigen::Map<VecX>(theta_views[v].data, theta_views[v].size).noalias() -=
            step * Eigen::Map<const VecX>(grad_views[v].data, grad_views[v].size);
      }
    }
    result.loss_curve.push_back(epoch_ssr / static_cast<double>(epoch_steps));
  }

  double final_ssr = 0.0;
  Eigen::Index final_steps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    final_ssr += NetOps<Model>::forward(params, data[i], caches[i]);
    final_steps += data[i].wrench_error.cols();
  }
  result.final_loss = final_ssr / static_cast<double>(final_steps);
  return result;
}

template <class Model>
double grad_check_impl(const Model& reference, const TrainingSequence& seq, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw std::invalid_argument("grad_check: eps out of [1e-7, 1e-4]");
  }
  Model params = reference;
  params.validate();
  check_sequence(seq, params.output_dim);

  typename NetOps<Model>::Cache cache;
  Model grads = zeros_like(params);
  NetOps<Model>::forward(params, seq, cache);
  NetOps<Model>::backward(params, seq, cache, grads);
  NetOps<Model>::apply_constraints(grads, params);

  bool diagonal = false;
  if constexpr (std::is_same_v<Model, PmdrnnParams>) diagonal = params.diagonal_recurrence;

  auto theta_views = param_views(params);
  auto grad_views = param_views(grads);
  double max_rel = 0.0;
  for (std::size_t v = 0; v < theta_views.size(); ++v) {
    const auto& view = theta_views[v];
    const Eigen::Index dim = diagonal && view.recurrent
                                 ? static_cast<Eigen::Index>(std::sqrt(double(view.size)))
                                 : 0;
    for (Eigen::Index i = 0; i < view.size; ++i) {
      if (diagonal && view.recurrent && (i % dim) != (i / dim)) continue; // constrained to 0
      const double saved = view.data[i];
      view.data[i] = saved + eps;
      const double lp = NetOps<Model>::forward(params, seq, cache);
      view.data[i] = saved - eps;
      const double lm = NetOps<Model>::forward(params, seq, cache);
      view.data[i] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = grad_views[v].data[i];
      // relative error with a unit floor: central differences of a loss of
      // magnitude L carry ~L*1e-10 of cancellation noise at eps=1e-6, so
      // components below 1 are compared absolutely
      const double rel = std::abs(analytic - numeric) /
                         std::max(std::abs(analytic) + std::abs(numeric), 1.0);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

} // namespace

// ---------------------------------------------------------------------------

PmdrnnParams PmdrnnParams::init(int hidden, int output_dim, int phase_basis,
                                std::uint64_t seed, bool diagonal_recurrence) {
  if (hidden < 1 || output_dim < 1 || phase_basis < 1) {
    throw std::invalid_argument("PmdrnnParams: dimensions must be positive");
  }
  PmdrnnParams p;
  p.hidden = hidden;
  p.output_dim = output_dim;
  p.phase_basis = phase_basis;
  p.diagonal_recurrence = diagonal_recurrence;
  std::mt19937_64 rng(seed);
  p.w_force = glorot(hidden, 6, rng);
  p.w_prev1 = glorot(hidden, output_dim, rng);
  p.w_prev2 = glorot(hidden, output_dim, rng);
  p.b_input = VecX::Zero(hidden);
  p.w_reset = glorot(hidden, hidden, rng);
  p.w_update = glorot(hidden, hidden, rng);
  p.w_cand = glorot(hidden, hidden, rng);
  p.u_reset = glorot(hidden, hidden, rng);
  p.u_update = glorot(hidden, hidden, rng);
  p.u_cand = glorot(hidden, hidden, rng);
  if (diagonal_recurrence) {
    zero_off_diagonal(p.u_reset);
    zero_off_diagonal(p.u_update);
    zero_off_diagonal(p.u_cand);
  }
  p.b_reset = VecX::Zero(hidden);
  p.b_update = VecX::Zero(hidden);
  p.b_cand = VecX::Zero(hidden);
  p.w_hidden = glorot(hidden, hidden, rng);
  p.b_hidden = VecX::Zero(hidden);
  p.w_phase = glorot(phase_basis, hidden, rng);
  p.b_phase = VecX::Zero(phase_basis);
  p.w_out = glorot(output_dim, phase_basis, rng);
  p.phase_rbf = RbfBasis::make(phase_basis);
  return p;
}

void PmdrnnParams::validate() const {
  const auto h = hidden;
  const auto d = output_dim;
  const auto n = phase_basis;
  const bool ok = w_force.rows() == h && w_force.cols() == 6 &&
                  w_prev1.rows() == h && w_prev1.cols() == d &&
                  w_prev2.rows() == h && w_prev2.cols() == d &&
                  b_input.size() == h && w_reset.rows() == h &&
                  w_reset.cols() == h && w_update.rows() == h &&
                  w_update.cols() == h && w_cand.rows() == h && w_cand.cols() == h &&
                  u_reset.rows() == h && u_reset.cols() == h &&
                  u_update.rows() == h && u_update.cols() == h &&
                  u_cand.rows() == h && u_cand.cols() == h && b_reset.size() == h &&
                  b_update.size() == h && b_cand.size() == h &&
                  w_hidden.rows() == h && w_hidden.cols() == h &&
                  b_hidden.size() == h && w_phase.rows() == n &&
                  w_phase.cols() == h && b_phase.size() == n && w_out.rows() == d &&
                  w_out.cols() == n && phase_rbf.size() == n;
  if (!ok) throw std::invalid_argument("PmdrnnParams: inconsistent layer shapes");
}

PmnnParams PmnnParams::init(int hidden, int output_dim, int phase_basis,
                            std::uint64_t seed) {
  if (hidden < 1 || output_dim < 1 || phase_basis < 1) {
    throw std::invalid_argument("PmnnParams: dimensions must be positive");
  }
  PmnnParams p;
  p.hidden = hidden;
  p.output_dim = output_dim;
  p.phase_basis = phase_basis;
  std::mt19937_64 rng(seed);
  p.w1 = glorot(hidden, 6, rng);
  p.b1 = VecX::Zero(hidden);
  p.w2 = glorot(hidden, hidden, rng);
  p.b2 = VecX::Zero(hidden);
  p.w3 = glorot(hidden, hidden, rng);
  p.b3 = VecX::Zero(hidden);
  p.w_phase = glorot(phase_basis, hidden, rng);
  p.b_phase = VecX::Zero(phase_basis);
  p.w_out = glorot(output_dim, phase_basis, rng);
  p.phase_rbf = RbfBasis::make(phase_basis);
  return p;
}

void PmnnParams::validate() const {
  const auto h = hidden;
  const auto d = output_dim;
  const auto n = phase_basis;
  const bool ok = w1.rows() == h && w1.cols() == 6 && b1.size() == h &&
                  w2.rows() == h && w2.cols() == h && b2.size() == h &&
                  w3.rows() == h && w3.cols() == h && b3.size() == h &&
                  w_phase.rows() == n && w_phase.cols() == h && b_phase.size() == n &&
                  w_out.rows() == d && w_out.cols() == n && phase_rbf.size() == n;
  if (!ok) throw std::invalid_argument("PmnnParams: inconsistent layer shapes");
}

FeedbackState FeedbackState::zero(int hidden, int output_dim) {
  FeedbackState st;
  st.h_gru = VecX::Zero(hidden);
  st.c_prev1 = VecX::Zero(output_dim);
  st.c_prev2 = VecX::Zero(output_dim);
  return st;
}

std::pair<VecX, FeedbackState> pmdrnn_forward(const PmdrnnParams& p,
                                              const WrenchError& df,
                                              const FeedbackState& state,
                                              const PhaseState& ph) {
  if (state.h_gru.size() != p.hidden || state.c_prev1.size() != p.output_dim ||
      state.c_prev2.size() != p.output_dim) {
    throw std::invalid_argument("pmdrnn_forward: state shape mismatch");
  }
  const VecX h_in = tanh_vec(p.w_force * df.value + p.w_prev1 * state.c_prev1 +
                             p.w_prev2 * state.c_prev2 + p.b_input);
  const VecX r = sigmoid(p.w_reset * h_in + p.u_reset * state.h_gru + p.b_reset);
  const VecX zt = sigmoid(p.w_update * h_in + p.u_update * state.h_gru + p.b_update);
  const VecX hc =
      tanh_vec(p.w_cand * h_in + p.u_cand * r.cwiseProduct(state.h_gru) + p.b_cand);
  const VecX h = zt.cwiseProduct(state.h_gru) +
                 (1.0 - zt.array()).matrix().cwiseProduct(hc);
  const VecX h1 = sigmoid(p.w_hidden * h + p.b_hidden);
  const VecX hpm =
      phase_gate(p.phase_rbf, ph).cwiseProduct(p.w_phase * h1 + p.b_phase);
  VecX c = p.w_out * hpm;

  FeedbackState next;
  next.h_gru = h;
  next.c_prev1 = c;
  next.c_prev2 = state.c_prev1;
  return {std::move(c), std::move(next)};
}

VecX pmnn_forward(const PmnnParams& p, const WrenchError& df, const PhaseState& ph) {
  p.validate();
  const VecX h1 = sigmoid(p.w1 * df.value + p.b1);
  const VecX h2 = sigmoid(p.w2 * h1 + p.b2);
  const VecX h3 = sigmoid(p.w3 * h2 + p.b3);
  const VecX hpm =
      phase_gate(p.phase_rbf, ph).cwiseProduct(p.w_phase * h3 + p.b_phase);
  return p.w_out * hpm;
}

double loss_ssr(const std::vector<VecX>& pred, const std::vector<VecX>& target) {
  if (pred.size() != target.size()) {
    throw std::invalid_argument("loss_ssr: sequence length mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != target[i].size()) {
      throw std::invalid_argument("loss_ssr: element dimension mismatch");
    }
    total += (pred[i] - target[i]).squaredNorm();
  }
  return total;
}

Normalizer Normalizer::fit(const TrainingPairs& data, int output_dim) {
  if (data.empty()) throw std::invalid_argument("Normalizer: empty dataset");
  Normalizer n;
  n.target_scale = VecX::Ones(output_dim);
  Vec6 sum = Vec6::Zero();
  Vec6 sumsq = Vec6::Zero();
  VecX target_sumsq = VecX::Zero(output_dim);
  Eigen::Index count = 0;
  for (const auto& seq : data) {
    check_sequence(seq, output_dim);
    sum += seq.wrench_error.rowwise().sum();
    sumsq += seq.wrench_error.array().square().matrix().rowwise().sum();
    target_sumsq += seq.target.array().square().matrix().rowwise().sum();
    count += seq.wrench_error.cols();
  }
  const double inv = 1.0 / static_cast<double>(count);
  n.input_mean = sum * inv;
  for (int i = 0; i < 6; ++i) {
    const double var = std::max(0.0, sumsq[i] * inv - n.input_mean[i] * n.input_mean[i]);
    const double sd = std::sqrt(var);
    n.input_scale[i] = (sd > 1e-9) ? sd : 1.0;
  }
  for (int i = 0; i < output_dim; ++i) {
    const double rms = std::sqrt(target_sumsq[i] * inv);
    n.target_scale[i] = (rms > 1e-9) ? rms : 1.0;
  }
  return n;
}

TrainingPairs Normalizer::apply(const TrainingPairs& data) const {
  TrainingPairs out = data;
  for (auto& seq : out) {
    seq.wrench_error = (seq.wrench_error.colwise() - input_mean)
                           .array()
                           .colwise() /
                       input_scale.array();
    seq.target = seq.target.array().colwise() / target_scale.array();
  }
  return out;
}

Vec6 Normalizer::normalize_input(const Vec6& v) const {
  return (v - input_mean).cwiseQuotient(input_scale);
}

VecX Normalizer::denormalize_output(const VecX& c) const {
  return c.cwiseProduct(target_scale);
}

TrainResult train(PmdrnnParams& params, const TrainingPairs& normalized,
                  const TrainConfig& cfg) {
  return train_impl(params, normalized, cfg);
}

TrainResult train(PmnnParams& params, const TrainingPairs& normalized,
                  const TrainConfig& cfg) {
  return train_impl(params, normalized, cfg);
}

double grad_check(const PmdrnnParams& params, const TrainingSequence& seq, double eps) {
  return grad_check_impl(params, seq, eps);
}

double grad_check(const PmnnParams& params, const TrainingSequence& seq, double eps) {
  return grad_check_impl(params, seq, eps);
}

TrainingSequence make_random_sequence(Eigen::Index steps, int output_dim,
                                      std::uint64_t seed) {
  if (steps < 1 || output_dim < 1) {
    throw std::invalid_argument("make_random_sequence: invalid shape");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TrainingSequence seq;
  seq.wrench_error.resize(6, steps);
  seq.target.resize(output_dim, steps);
  seq.phase_s.resize(steps);
  seq.phase_u.resize(steps);
  const double dt = 0.02;
  PhaseState ph = PhaseState::initial(static_cast<double>(steps) * dt);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (int i = 0; i < 6; ++i) seq.wrench_error(i, t) = dist(rng);
    for (int i = 0; i < output_dim; ++i) seq.target(i, t) = dist(rng);
    seq.phase_s[t] = ph.s;
    seq.phase_u[t] = ph.u;
    ph = canonical_step(ph, canonical_alpha(), dt);
  }
  return seq;
}

const char* to_string(ModelKind kind) {
  return kind == ModelKind::pmdrnn ? "pmdrnn" : "pmnn";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "pmdrnn") return ModelKind::pmdrnn;
  if (name == "pmnn") return ModelKind::pmnn;
  throw std::invalid_argument("unknown model kind: " + name);
}

std::pair<Checkpoint, TrainResult> train_model(ModelKind kind, const TrainingPairs& raw,
                                               const TrainConfig& cfg) {
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.cfg = cfg;
  ckpt.norm = Normalizer::fit(raw, cfg.output_dim);
  const TrainingPairs normalized = ckpt.norm.apply(raw);
  TrainResult result;
  if (kind == ModelKind::pmdrnn) {
    ckpt.pmdrnn = PmdrnnParams::init(cfg.hidden, cfg.output_dim, cfg.phase_basis,
                                     cfg.seed, cfg.diagonal_recurrence);
    result = train(ckpt.pmdrnn, normalized, cfg);
  } else {
    ckpt.pmnn = PmnnParams::init(cfg.hidden, cfg.output_dim, cfg.phase_basis, cfg.seed);
    result = train(ckpt.pmnn, normalized, cfg);
  }
  return {std::move(ckpt), std::move(result)};
}

namespace {

nlohmann::ordered_json config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"clip_grad_norm", cfg.clip_grad_norm},
          {"hidden", cfg.hidden},
          {"output_dim", cfg.output_dim},
          {"phase_basis", cfg.phase_basis},
          {"diagonal_recurrence", cfg.diagonal_recurrence}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.clip_grad_norm = j.at("clip_grad_norm").get<double>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.output_dim = j.at("output_dim").get<int>();
  cfg.phase_basis = j.at("phase_basis").get<int>();
  cfg.diagonal_recurrence = j.at("diagonal_recurrence").get<bool>();
  return cfg;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["kind"] = "checkpoint";
  j["model"] = to_string(ckpt.kind);
  nlohmann::ordered_json weights;
  if (ckpt.kind == ModelKind::pmdrnn) {
    const PmdrnnParams& p = ckpt.pmdrnn;
    p.validate();
    j["dims"] = {{"hidden", p.hidden},
                 {"output_dim", p.output_dim},
                 {"phase_basis", p.phase_basis}};
    j["diagonal_recurrence"] = p.diagonal_recurrence;
    weights["w_force"] = detail::mat_to_json(p.w_force);
    weights["w_prev1"] = detail::mat_to_json(p.w_prev1);
    weights["w_prev2"] = detail::mat_to_json(p.w_prev2);
    weights["b_input"] = detail::vec_to_json(p.b_input);
    weights["w_reset"] = detail::mat_to_json(p.w_reset);
    weights["w_update"] = detail::mat_to_json(p.w_update);
    weights["w_cand"] = detail::mat_to_json(p.w_cand);
    weights["u_reset"] = detail::mat_to_json(p.u_reset);
    weights["u_update"] = detail::mat_to_json(p.u_update);
    weights["u_cand"] = detail::mat_to_json(p.u_cand);
    weights["b_reset"] = detail::vec_to_json(p.b_reset);
    weights["b_update"] = detail::vec_to_json(p.b_update);
    weights["b_cand"] = detail::vec_to_json(p.b_cand);
    weights["w_hidden"] = detail::mat_to_json(p.w_hidden);
    weights["b_hidden"] = detail::vec_to_json(p.b_hidden);
    weights["w_phase"] = detail::mat_to_json(p.w_phase);
    weights["b_phase"] = detail::vec_to_json(p.b_phase);
    weights["w_out"] = detail::mat_to_json(p.w_out);
    j["phase_rbf"] = detail::basis_to_json(p.phase_rbf);
  } else {
    const PmnnParams& p = ckpt.pmnn;
    p.validate();
    j["dims"] = {{"hidden", p.hidden},
                 {"output_dim", p.output_dim},
                 {"phase_basis", p.phase_basis}};
    weights["w1"] = detail::mat_to_json(p.w1);
    weights["b1"] = detail::vec_to_json(p.b1);
    weights["w2"] = detail::mat_to_json(p.w2);
    weights["b2"] = detail::vec_to_json(p.b2);
    weights["w3"] = detail::mat_to_json(p.w3);
    weights["b3"] = detail::vec_to_json(p.b3);
    weights["w_phase"] = detail::mat_to_json(p.w_phase);
    weights["b_phase"] = detail::vec_to_json(p.b_phase);
    weights["w_out"] = detail::mat_to_json(p.w_out);
    j["phase_rbf"] = detail::basis_to_json(p.phase_rbf);
  }
  j["weights"] = weights;
  j["normalizer"] = {
      {"input_mean", std::vector<double>(ckpt.norm.input_mean.begin(),
                                         ckpt.norm.input_mean.end())},
      {"input_scale", std::vector<double>(ckpt.norm.input_scale.begin(),
                                          ckpt.norm.input_scale.end())},
      {"target_scale", detail::vec_to_json(ckpt.norm.target_scale)}};
  j["train_config"] = config_to_json(ckpt.cfg);

  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  file << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  nlohmann::json j;
  file >> j;
  if (j.at("format_version").get<int>() != 1 || j.at("kind") != "checkpoint") {
    throw std::runtime_error("load_checkpoint: unsupported document " + path.string());
  }
  Checkpoint ckpt;
  ckpt.kind = model_kind_from_string(j.at("model").get<std::string>());
  const auto& dims = j.at("dims");
  const auto& w = j.at("weights");
  if (ckpt.kind == ModelKind::pmdrnn) {
    PmdrnnParams p;
    p.hidden = dims.at("hidden").get<int>();
    p.output_dim = dims.at("output_dim").get<int>();
    p.phase_basis = dims.at("phase_basis").get<int>();
    p.diagonal_recurrence = j.at("diagonal_recurrence").get<bool>();
    p.w_force = detail::mat_from_json(w.at("w_force"));
    p.w_prev1 = detail::mat_from_json(w.at("w_prev1"));
    p.w_prev2 = detail::mat_from_json(w.at("w_prev2"));
    p.b_input = detail::vec_from_json(w.at("b_input"));
    p.w_reset = detail::mat_from_json(w.at("w_reset"));
    p.w_update = detail::mat_from_json(w.at("w_update"));
    p.w_cand = detail::mat_from_json(w.at("w_cand"));
    p.u_reset = detail::mat_from_json(w.at("u_reset"));
    p.u_update = detail::mat_from_json(w.at("u_update"));
    p.u_cand = detail::mat_from_json(w.at("u_cand"));
    p.b_reset = detail::vec_from_json(w.at("b_reset"));
    p.b_update = detail::vec_from_json(w.at("b_update"));
    p.b_cand = detail::vec_from_json(w.at("b_cand"));
    p.w_hidden = detail::mat_from_json(w.at("w_hidden"));
    p.b_hidden = detail::vec_from_json(w.at("b_hidden"));
    p.w_phase = detail::mat_from_json(w.at("w_phase"));
    p.b_phase = detail::vec_from_json(w.at("b_phase"));
    p.w_out = detail::mat_from_json(w.at("w_out"));
    p.phase_rbf = detail::basis_from_json(j.at("phase_rbf"));
    p.validate();
    ckpt.pmdrnn = std::move(p);
  } else {
    PmnnParams p;
    p.hidden = dims.at("hidden").get<int>();
    p.output_dim = dims.at("output_dim").get<int>();
    p.phase_basis = dims.at("phase_basis").get<int>();
    p.w1 = detail::mat_from_json(w.at("w1"));
    p.b1 = detail::vec_from_json(w.at("b1"));
    p.w2 = detail::mat_from_json(w.at("w2"));
    p.b2 = detail::vec_from_json(w.at("b2"));
    p.w3 = detail::mat_from_json(w.at("w3"));
    p.b3 = detail::vec_from_json(w.at("b3"));
    p.w_phase = detail::mat_from_json(w.at("w_phase"));
    p.b_phase = detail::vec_from_json(w.at("b_phase"));
    p.w_out = detail::mat_from_json(w.at("w_out"));
    p.phase_rbf = detail::basis_from_json(j.at("phase_rbf"));
    p.validate();
    ckpt.pmnn = std::move(p);
  }
  const auto& jn = j.at("normalizer");
  const auto mean = jn.at("input_mean").get<std::vector<double>>();
  const auto scale = jn.at("input_scale").get<std::vector<double>>();
  for (int i = 0; i < 6; ++i) {
    ckpt.norm.input_mean[i] = mean.at(static_cast<std::size_t>(i));
    ckpt.norm.input_scale[i] = scale.at(static_cast<std::size_t>(i));
  }
  ckpt.norm.target_scale = detail::vec_from_json(jn.at("target_scale"));
  ckpt.cfg = config_from_json(j.at("train_config"));
  return ckpt;
}

FeedbackModel::FeedbackModel(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {
  if (ckpt_.kind == ModelKind::pmdrnn) {
    ckpt_.pmdrnn.validate();
    state_ = FeedbackState::zero(ckpt_.pmdrnn.hidden, ckpt_.pmdrnn.output_dim);
  } else {
    ckpt_.pmnn.validate();
    state_ = FeedbackState::zero(1, ckpt_.pmnn.output_dim);
  }
}

VecX FeedbackModel::correction(const Vec6& wrench_error, const PhaseState& ph) {
  WrenchError df;
  df.value = ckpt_.norm.normalize_input(wrench_error);
  if (ckpt_.kind == ModelKind::pmdrnn) {
    auto [c, next] = pmdrnn_forward(ckpt_.pmdrnn, df, state_, ph);
    state_ = std::move(next);
    return ckpt_.norm.denormalize_output(c);
  }
  return ckpt_.norm.denormalize_output(pmnn_forward(ckpt_.pmnn, df, ph));
}

void FeedbackModel::reset() {
  if (ckpt_.kind == ModelKind::pmdrnn) {
    state_ = FeedbackState::zero(ckpt_.pmdrnn.hidden, ckpt_.pmdrnn.output_dim);
  } else {
    state_ = FeedbackState::zero(1, ckpt_.pmnn.output_dim);
  }
}

} // namespace polishfb
