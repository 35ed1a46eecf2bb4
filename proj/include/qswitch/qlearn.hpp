#pragma once

// Constant-step-size Q-learning under i.i.d. and single-trajectory Markovian
// sampling, with the exact noise terms extracted at every step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qswitch/error.hpp"
#include "qswitch/mdp.hpp"
#include "qswitch/policies.hpp"
#include "qswitch/rng.hpp"

namespace qswitch {

namespace detail {
inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

inline void check_distribution(const Vector& d, std::size_t n, const char* who) {
  if (static_cast<std::size_t>(d.size()) != n) throw std::invalid_argument(std::string(who) + ": wrong length");
  if (!(d.array() > 0.0).all())
    throw std::invalid_argument(std::string(who) + ": every state-action pair needs positive probability");
  if (std::abs(d.sum() - 1.0) > kSimplexTol) throw std::invalid_argument(std::string(who) + ": does not sum to 1");
}
}  // namespace detail

/// (s, a) ~ d independently at every step.
class IidSampler {
 public:
  IidSampler(Vector d, std::uint64_t seed) : d_(std::move(d)), rng_(seed) {
    detail::check_distribution(d_, static_cast<std::size_t>(d_.size()), "IidSampler");
  }

  const Vector& d() const { return d_; }
  double d_min() const { return d_.minCoeff(); }
  const CounterRng& rng() const { return rng_; }

  std::size_t draw_coord(std::uint64_t counter) const { return sample_index(detail::as_span(d_), rng_.uniform(counter, 0)); }

 private:
  Vector d_;
  CounterRng rng_;
};

/// P^b((s',a') | (s,a)) = P(s'|s,a) b(a'|s') on the flat state-action index.
inline Matrix behavior_kernel(const Mdp& mdp, const StochasticPolicy& behavior) {
  detail::check_policy_dims(behavior, dims_of(mdp));
  const auto n = static_cast<Eigen::Index>(mdp.n_sa());
  Matrix k = Matrix::Zero(n, n);
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a)
      for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2)
        for (std::size_t a2 = 0; a2 < mdp.n_actions(); ++a2)
          k(static_cast<Eigen::Index>(mdp.index(s, a)), static_cast<Eigen::Index>(mdp.index(s2, a2))) =
              mdp.p(s, a, s2) * behavior(a2, s2);
  return k;
}

struct ChainStructure {
  bool irreducible = false;
  std::size_t period = 0;  // 0 when reducible
};

/// Support-graph analysis: strong connectivity by forward/backward
/// reachability, period as the gcd of level differences along edges.
inline ChainStructure analyze_chain(const Matrix& kernel) {
  const auto n = static_cast<std::size_t>(kernel.rows());
  auto reach = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        const double w = transpose ? kernel(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u))
                                   : kernel(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v));
        if (w > 0.0 && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  ChainStructure out;
  out.irreducible = n > 0 && reach(false) && reach(true);
  if (!out.irreducible) return out;

  std::vector<long> level(n, -1);
  std::vector<std::size_t> queue{0};
  level[0] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t u = queue[head];
    for (std::size_t v = 0; v < n; ++v)
      if (kernel(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      }
  }
  long g = 0;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (kernel(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0.0)
        g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
  out.period = static_cast<std::size_t>(g);
  return out;
}

inline constexpr double kStationaryTol = 1e-10;

/// Unique d with d^T K = d^T, sum d = 1. Rejects reducible chains, and
/// periodic ones unless `require_aperiodic` is false.
inline Vector stationary_distribution(const Matrix& kernel, bool require_aperiodic = true) {
  const auto n = kernel.rows();
  if (n == 0 || kernel.cols() != n) throw std::invalid_argument("stationary_distribution: kernel must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((kernel.row(i).array() < 0.0).any() || std::abs(kernel.row(i).sum() - 1.0) > kSimplexTol)
      throw std::invalid_argument("stationary_distribution: kernel row " + std::to_string(i) + " is not a distribution");
  }
  const ChainStructure cs = analyze_chain(kernel);
  if (!cs.irreducible) throw std::invalid_argument("stationary_distribution: chain is reducible");
  if (require_aperiodic && cs.period != 1)
    throw std::invalid_argument("stationary_distribution: chain is periodic (period " + std::to_string(cs.period) + ")");

  Matrix a = kernel.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector d = a.fullPivLu().solve(rhs);
  // polish against rounding: a few exact power steps keep d on the simplex
  for (int it = 0; it < 8; ++it) {
    d = d.cwiseMax(0.0);
    d /= d.sum();
    if ((kernel.transpose() * d - d).lpNorm<1>() <= kStationaryTol * 1e-2) break;
    d = kernel.transpose() * d;
  }
  d = d.cwiseMax(0.0);
  d /= d.sum();
  if ((kernel.transpose() * d - d).lpNorm<1>() > kStationaryTol)
    throw InvariantViolation("stationary_distribution: balance residual above tolerance");
  return d;
}

/// Single-trajectory sampler: X_{k+1} = (s', a') with s' ~ P(.|X_k), a' ~ b(.|s').
class MarkovSampler {
 public:
  MarkovSampler(const Mdp& mdp, StochasticPolicy behavior, std::uint64_t seed, std::size_t initial_coord,
                bool require_aperiodic = true)
      : behavior_(std::move(behavior)),
        kernel_(behavior_kernel(mdp, behavior_)),
        stationary_(stationary_distribution(kernel_, require_aperiodic)),
        rng_(seed),
        coord_(initial_coord) {
    if (initial_coord >= mdp.n_sa()) throw std::invalid_argument("MarkovSampler: initial coordinate out of range");
  }

  const StochasticPolicy& behavior() const { return behavior_; }
  const Matrix& kernel() const { return kernel_; }
  const Vector& stationary() const { return stationary_; }
  double d_min() const { return stationary_.minCoeff(); }
  const CounterRng& rng() const { return rng_; }
  std::size_t coord() const { return coord_; }
  void set_coord(std::size_t c) { coord_ = c; }

 private:
  StochasticPolicy behavior_;
  Matrix kernel_;
  Vector stationary_;
  CounterRng rng_;
  std::size_t coord_;
};

struct SampledTransition {
  std::size_t coord = 0;
  std::size_t next_state = 0;
  double reward = 0.0;
};

struct StepResult {
  QVector q_next;
  Vector noise;  // w_k (i.i.d.) or xi_{k+1} (Markovian)
  SampledTransition sample;
  double td = 0.0;
  std::size_t next_coord = 0;  // Markovian only
};

namespace detail {

inline SampledTransition draw_transition(const Mdp& mdp, const CounterRng& rng, std::uint64_t counter,
                                         std::size_t coord) {
  const std::size_t s = mdp.state_of(coord);
  const std::size_t a = mdp.action_of(coord);
  const std::size_t s_next = sample_index(mdp.p_row(s, a), rng.uniform(counter, 1));
  return {coord, s_next, mdp.r(s, a, s_next)};
}

inline double td_error(const Mdp& mdp, const QVector& q, const SampledTransition& t) {
  double v_next = q(static_cast<Eigen::Index>(mdp.index(t.next_state, 0)));
  for (std::size_t a = 1; a < mdp.n_actions(); ++a)
    v_next = std::max(v_next, q(static_cast<Eigen::Index>(mdp.index(t.next_state, a))));
  return t.reward + mdp.gamma() * v_next - q(static_cast<Eigen::Index>(t.coord));
}

}  // namespace detail

/// One asynchronous update at step `counter`. The returned noise is
/// w_k = onehot(TD) - D (F(Q) - Q).
inline StepResult qlearn_step_iid(const QVector& q, const IidSampler& sampler, const Mdp& mdp, double alpha,
                                  std::uint64_t counter, const Vector& expected_r) {
  mdp.check_dims(q);
  const std::size_t coord = sampler.draw_coord(counter);
  StepResult out;
  out.sample = detail::draw_transition(mdp, sampler.rng(), counter, coord);
  out.td = detail::td_error(mdp, q, out.sample);
  out.q_next = q;
  out.q_next(static_cast<Eigen::Index>(coord)) += alpha * out.td;
  out.noise = -(sampler.d().asDiagonal() * (bellman_optimality(mdp, q, expected_r) - q));
  out.noise(static_cast<Eigen::Index>(coord)) += out.td;
  out.next_coord = coord;
  return out;
}

inline StepResult qlearn_step_iid(const QVector& q, const IidSampler& sampler, const Mdp& mdp, double alpha,
                                  std::uint64_t counter) {
  return qlearn_step_iid(q, sampler, mdp, alpha, counter, expected_reward(mdp));
}

/// Transition from a fixed coordinate, without advancing any sampler state.
/// xi_{k+1} = e_X (TD - (F(Q) - Q)_X).
inline StepResult markov_transition(const QVector& q, const MarkovSampler& sampler, const Mdp& mdp, double alpha,
                                    std::uint64_t counter, std::size_t coord, const Vector& expected_r) {
  mdp.check_dims(q);
  StepResult out;
  out.sample = detail::draw_transition(mdp, sampler.rng(), counter, coord);
  out.td = detail::td_error(mdp, q, out.sample);
  out.q_next = q;
  out.q_next(static_cast<Eigen::Index>(coord)) += alpha * out.td;
  const auto i = static_cast<Eigen::Index>(coord);
  const double cond_mean = bellman_optimality(mdp, q, expected_r)(i) - q(i);
  out.noise = Vector::Zero(q.size());
  out.noise(i) = out.td - cond_mean;
  const auto b_row = sampler.behavior().probs().row(static_cast<Eigen::Index>(out.sample.next_state));
  Vector b = b_row.transpose();
  const std::size_t a_next = sample_index(detail::as_span(b), sampler.rng().uniform(counter, 2));
  out.next_coord = mdp.index(out.sample.next_state, a_next);
  return out;
}

/// One single-trajectory update; advances the sampler to (s_{k+1}, a_{k+1}).
inline StepResult qlearn_step_markov(const QVector& q, MarkovSampler& sampler, const Mdp& mdp, double alpha,
                                     std::uint64_t counter, const Vector& expected_r) {
  StepResult out = markov_transition(q, sampler, mdp, alpha, counter, sampler.coord(), expected_r);
  sampler.set_coord(out.next_coord);
  return out;
}

inline StepResult qlearn_step_markov(const QVector& q, MarkovSampler& sampler, const Mdp& mdp, double alpha,
                                     std::uint64_t counter) {
  return qlearn_step_markov(q, sampler, mdp, alpha, counter, expected_reward(mdp));
}

struct NoiseConstants {
  double w_max = 0.0;  // (R_max + (1+gamma) B_Q)^2
  double b_q = 0.0;    // max{||Q_0||_inf, R_max/(1-gamma)}
  /// 4 R_max^2/(1-gamma)^2, an upper bound on w_max whenever ||Q_0||_inf <= R_max/(1-gamma).
  std::optional<double> normalized_envelope;
};

inline NoiseConstants noise_constant(const Mdp& mdp, const QVector& q0) {
  mdp.check_dims(q0);
  const double r_max = mdp.r_max();
  const double gamma = mdp.gamma();
  const double q0_inf = q0.size() ? q0.lpNorm<Eigen::Infinity>() : 0.0;
  NoiseConstants c;
  c.b_q = std::max(q0_inf, r_max / (1.0 - gamma));
  const double root = r_max + (1.0 + gamma) * c.b_q;
  c.w_max = root * root;
  if (q0_inf <= r_max / (1.0 - gamma)) c.normalized_envelope = 4.0 * r_max * r_max / ((1.0 - gamma) * (1.0 - gamma));
  return c;
}

// ---------------------------------------------------------------- trajectories

enum class SamplingMode { iid, markov };

struct StepRecord {
  std::size_t k = 0;
  std::size_t coord = 0;
  std::size_t next_state = 0;
  double reward = 0.0;
  std::size_t next_coord = 0;  // Markovian: X_{k+1}; i.i.d.: same as coord
};

struct RecordOptions {
  bool snapshots = true;  // store Q_0 .. Q_K
  bool noise = true;      // store w_k / xi_{k+1}
  std::optional<QVector> q_star;  // enables the error summaries
};

struct TrajectoryRecord {
  SamplingMode mode = SamplingMode::iid;
  double alpha = 0.0;
  Vector d;  // sampling distribution (i.i.d.) or stationary distribution (Markovian)
  QVector q0;
  std::size_t initial_coord = 0;
  std::vector<StepRecord> steps;
  std::vector<QVector> q;     // Q_0 .. Q_K when snapshots are kept
  std::vector<Vector> noise;  // one per step when kept
  std::vector<double> err_inf;  // ||Q_k - Q*||_inf, k = 0..K, when q_star given
  std::vector<double> err_2;
  std::vector<double> q_inf;  // ||Q_k||_inf, k = 0..K
};

inline constexpr double kBoundednessRelTol = 1e-12;

namespace detail {

template <class StepFn>
TrajectoryRecord run_steps(const Mdp& mdp, const QVector& q0, double alpha, std::size_t steps,
                           const RecordOptions& opts, TrajectoryRecord rec, StepFn&& step) {
  mdp.check_dims(q0);
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("run_trajectory: alpha must lie in (0,1)");
  const double b_q = noise_constant(mdp, q0).b_q;
  const double envelope = b_q * (1.0 + kBoundednessRelTol) + kBoundednessRelTol;
  rec.alpha = alpha;
  rec.q0 = q0;
  rec.steps.reserve(steps);
  QVector q = q0;
  auto summarize = [&](const QVector& cur) {
    if (opts.snapshots) rec.q.push_back(cur);
    rec.q_inf.push_back(cur.size() ? cur.lpNorm<Eigen::Infinity>() : 0.0);
    if (opts.q_star) {
      const Vector e = cur - *opts.q_star;
      rec.err_inf.push_back(e.lpNorm<Eigen::Infinity>());
      rec.err_2.push_back(e.norm());
    }
  };
  summarize(q);
  for (std::size_t k = 0; k < steps; ++k) {
    StepResult r = step(q, static_cast<std::uint64_t>(k));
    rec.steps.push_back({k, r.sample.coord, r.sample.next_state, r.sample.reward, r.next_coord});
    if (opts.noise) rec.noise.push_back(std::move(r.noise));
    q = std::move(r.q_next);
    if (q.lpNorm<Eigen::Infinity>() > envelope)
      throw InvariantViolation("run_trajectory: ||Q_k||_inf exceeded max{||Q_0||_inf, R_max/(1-gamma)} at step " +
                               std::to_string(k + 1));
    summarize(q);
  }
  return rec;
}

}  // namespace detail

/// Deterministic in (sampler seed, q0, alpha, steps).
inline TrajectoryRecord run_trajectory(const Mdp& mdp, const IidSampler& sampler, double alpha, std::size_t steps,
                                       const QVector& q0, const RecordOptions& opts = {}) {
  TrajectoryRecord rec;
  rec.mode = SamplingMode::iid;
  rec.d = sampler.d();
  const Vector r = expected_reward(mdp);
  return detail::run_steps(mdp, q0, alpha, steps, opts, std::move(rec), [&](const QVector& q, std::uint64_t k) {
    return qlearn_step_iid(q, sampler, mdp, alpha, k, r);
  });
}

/// Starts from the sampler's current coordinate; the sampler is copied, not advanced.
inline TrajectoryRecord run_trajectory(const Mdp& mdp, MarkovSampler sampler, double alpha, std::size_t steps,
                                       const QVector& q0, const RecordOptions& opts = {}) {
  TrajectoryRecord rec;
  rec.mode = SamplingMode::markov;
  rec.d = sampler.stationary();
  rec.initial_coord = sampler.coord();
  const Vector r = expected_reward(mdp);
  return detail::run_steps(mdp, q0, alpha, steps, opts, std::move(rec), [&](const QVector& q, std::uint64_t k) {
    return qlearn_step_markov(q, sampler, mdp, alpha, k, r);
  });
}

/// Rebuild Q_0 .. Q_K from the recorded step tuples alone.
inline std::vector<QVector> replay(const Mdp& mdp, const TrajectoryRecord& rec) {
  std::vector<QVector> out;
  out.reserve(rec.steps.size() + 1);
  QVector q = rec.q0;
  out.push_back(q);
  for (const auto& st : rec.steps) {
    const double td = detail::td_error(mdp, q, {st.coord, st.next_state, st.reward});
    q(static_cast<Eigen::Index>(st.coord)) += rec.alpha * td;
    out.push_back(q);
  }
  return out;
}

}  // namespace qswitch
