#pragma once

// Finite discounted MDP, the fixed (state, action) ordering, the Bellman
// optimality operator and an optimal-Q solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qswitch/error.hpp"

namespace qswitch {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Q-functions are flat vectors with index(s, a) = a * n_states + s, the
/// layout selected by e_a (x) e_s. States and actions are 0-based.
using QVector = Eigen::VectorXd;

inline constexpr double kSimplexTol = 1e-12;

class Mdp {
 public:
  /// `transitions` and `rewards` are laid out [s][a][s'] in row-major order.
  Mdp(std::size_t n_states, std::size_t n_actions, double gamma, std::vector<double> transitions,
      std::vector<double> rewards)
      : n_states_(n_states),
        n_actions_(n_actions),
        gamma_(gamma),
        p_(std::move(transitions)),
        r_(std::move(rewards)) {
    validate();
    build_cache();
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t n_sa() const { return n_states_ * n_actions_; }
  double gamma() const { return gamma_; }
  double r_max() const { return r_max_; }

  std::size_t index(std::size_t s, std::size_t a) const { return a * n_states_ + s; }
  std::size_t state_of(std::size_t i) const { return i % n_states_; }
  std::size_t action_of(std::size_t i) const { return i / n_states_; }

  double p(std::size_t s, std::size_t a, std::size_t s_next) const {
    return p_[(s * n_actions_ + a) * n_states_ + s_next];
  }
  double r(std::size_t s, std::size_t a, std::size_t s_next) const {
    return r_[(s * n_actions_ + a) * n_states_ + s_next];
  }
  /// Next-state distribution P(. | s, a), contiguous.
  std::span<const double> p_row(std::size_t s, std::size_t a) const {
    return {p_.data() + (s * n_actions_ + a) * n_states_, n_states_};
  }

  /// Stacked kernel of shape (n_sa x n_states); row index(s,a) is P(. | s, a).
  const Matrix& p_matrix() const { return p_mat_; }

  const std::vector<double>& raw_transitions() const { return p_; }
  const std::vector<double>& raw_rewards() const { return r_; }

  void check_dims(const QVector& q) const {
    if (static_cast<std::size_t>(q.size()) != n_sa())
      throw std::invalid_argument("Q vector has length " + std::to_string(q.size()) + ", expected " +
                                  std::to_string(n_sa()));
  }

 private:
  void validate() const {
    if (n_states_ == 0 || n_actions_ == 0) throw std::invalid_argument("Mdp: empty state or action set");
    if (!(gamma_ >= 0.0 && gamma_ < 1.0)) throw std::invalid_argument("Mdp: gamma must lie in [0,1)");
    const std::size_t expected = n_states_ * n_actions_ * n_states_;
    if (p_.size() != expected || r_.size() != expected)
      throw std::invalid_argument("Mdp: transition/reward tensors must have n_states*n_actions*n_states entries");
    for (std::size_t row = 0; row < n_states_ * n_actions_; ++row) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n_states_; ++j) {
        const double v = p_[row * n_states_ + j];
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("Mdp: negative or non-finite probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kSimplexTol)
        throw std::invalid_argument("Mdp: transition row " + std::to_string(row) + " sums to " + std::to_string(sum));
    }
    for (double v : r_)
      if (!std::isfinite(v)) throw std::invalid_argument("Mdp: non-finite reward");
  }

  void build_cache() {
    r_max_ = 0.0;
    for (double v : r_) r_max_ = std::max(r_max_, std::abs(v));
    p_mat_.resize(static_cast<Eigen::Index>(n_sa()), static_cast<Eigen::Index>(n_states_));
    for (std::size_t s = 0; s < n_states_; ++s)
      for (std::size_t a = 0; a < n_actions_; ++a)
        for (std::size_t j = 0; j < n_states_; ++j)
          p_mat_(static_cast<Eigen::Index>(index(s, a)), static_cast<Eigen::Index>(j)) = p(s, a, j);
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  double gamma_;
  std::vector<double> p_;
  std::vector<double> r_;
  double r_max_ = 0.0;
  Matrix p_mat_;
};

/// R(s,a) = sum_{s'} P(s'|s,a) r(s,a,s').
inline Vector expected_reward(const Mdp& mdp) {
  Vector out(static_cast<Eigen::Index>(mdp.n_sa()));
  for (std::size_t s = 0; s < mdp.n_states(); ++s)
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      double acc = 0.0;
      for (std::size_t j = 0; j < mdp.n_states(); ++j) acc += mdp.p(s, a, j) * mdp.r(s, a, j);
      out(static_cast<Eigen::Index>(mdp.index(s, a))) = acc;
    }
  return out;
}

/// Greedy action at state s; ties go to the lowest action index.
inline std::size_t greedy_action(const Mdp& mdp, const QVector& q, std::size_t s) {
  std::size_t best = 0;
  double best_v = q(static_cast<Eigen::Index>(mdp.index(s, 0)));
  for (std::size_t a = 1; a < mdp.n_actions(); ++a) {
    const double v = q(static_cast<Eigen::Index>(mdp.index(s, a)));
    if (v > best_v) {
      best_v = v;
      best = a;
    }
  }
  return best;
}

/// V_Q(s) = max_a Q(s,a).
inline Vector state_values(const Mdp& mdp, const QVector& q) {
  mdp.check_dims(q);
  Vector v(static_cast<Eigen::Index>(mdp.n_states()));
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double m = q(static_cast<Eigen::Index>(mdp.index(s, 0)));
    for (std::size_t a = 1; a < mdp.n_actions(); ++a) m = std::max(m, q(static_cast<Eigen::Index>(mdp.index(s, a))));
    v(static_cast<Eigen::Index>(s)) = m;
  }
  return v;
}

/// F(Q) = R + gamma P V_Q.
inline QVector bellman_optimality(const Mdp& mdp, const QVector& q, const Vector& expected_r) {
  mdp.check_dims(q);
  return expected_r + mdp.gamma() * (mdp.p_matrix() * state_values(mdp, q));
}

inline QVector bellman_optimality(const Mdp& mdp, const QVector& q) {
  return bellman_optimality(mdp, q, expected_reward(mdp));
}

inline constexpr double kDefaultQStarTol = 1e-10;
inline constexpr std::size_t kValueIterationCap = 1'000'000;

/// Value iteration on F. Stops once the sup-norm step is below
/// tol (1-gamma) / (2 gamma), which bounds the distance to Q* by tol.
inline QVector solve_q_star(const Mdp& mdp, double tol = kDefaultQStarTol,
                            std::size_t max_iterations = kValueIterationCap) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_q_star: tol must be positive");
  const Vector r = expected_reward(mdp);
  const double gamma = mdp.gamma();
  const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / (2.0 * gamma) : std::numeric_limits<double>::infinity();
  QVector q = QVector::Zero(static_cast<Eigen::Index>(mdp.n_sa()));
  for (std::size_t it = 0; it < max_iterations; ++it) {
    QVector next = bellman_optimality(mdp, q, r);
    const double step = (next - q).lpNorm<Eigen::Infinity>();
    q = std::move(next);
    if (step < stop) {
      const double envelope = mdp.r_max() / (1.0 - gamma);
      if (q.lpNorm<Eigen::Infinity>() > envelope + tol)
        throw InvariantViolation("solve_q_star: ||Q*||_inf exceeds R_max/(1-gamma)");
      return q;
    }
  }
  throw BudgetError("solve_q_star: value iteration did not converge within the iteration cap");
}

// ---------------------------------------------------------------- JSON

/// {"n_states", "n_actions", "gamma", "P": [s][a][s'], "r": [s][a][s']}
inline Mdp mdp_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "n_states" && k != "n_actions" && k != "gamma" && k != "P" && k != "r")
      throw ConfigError("mdp: unknown key '" + k + "'");
  }
  try {
    const auto ns = j.at("n_states").get<std::size_t>();
    const auto na = j.at("n_actions").get<std::size_t>();
    const auto gamma = j.at("gamma").get<double>();
    auto flatten = [&](const nlohmann::json& t, const char* name) {
      std::vector<double> out;
      out.reserve(ns * na * ns);
      if (!t.is_array() || t.size() != ns) throw ConfigError(std::string("mdp: ") + name + " must have n_states rows");
      for (const auto& per_s : t) {
        if (!per_s.is_array() || per_s.size() != na)
          throw ConfigError(std::string("mdp: ") + name + "[s] must have n_actions entries");
        for (const auto& per_a : per_s) {
          if (!per_a.is_array() || per_a.size() != ns)
            throw ConfigError(std::string("mdp: ") + name + "[s][a] must have n_states entries");
          for (const auto& v : per_a) out.push_back(v.get<double>());
        }
      }
      return out;
    };
    return Mdp(ns, na, gamma, flatten(j.at("P"), "P"), flatten(j.at("r"), "r"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mdp: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline nlohmann::json mdp_to_json(const Mdp& mdp) {
  nlohmann::json p = nlohmann::json::array();
  nlohmann::json r = nlohmann::json::array();
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    nlohmann::json ps = nlohmann::json::array();
    nlohmann::json rs = nlohmann::json::array();
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      nlohmann::json pa = nlohmann::json::array();
      nlohmann::json ra = nlohmann::json::array();
      for (std::size_t j = 0; j < mdp.n_states(); ++j) {
        pa.push_back(mdp.p(s, a, j));
        ra.push_back(mdp.r(s, a, j));
      }
      ps.push_back(std::move(pa));
      rs.push_back(std::move(ra));
    }
    p.push_back(std::move(ps));
    r.push_back(std::move(rs));
  }
  return {{"n_states", mdp.n_states()}, {"n_actions", mdp.n_actions()}, {"gamma", mdp.gamma()},
          {"P", std::move(p)}, {"r", std::move(r)}};
}

}  // namespace qswitch
