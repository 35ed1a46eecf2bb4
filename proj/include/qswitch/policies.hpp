#pragma once

// Deterministic and stochastic policies, their selection matrices Pi,
// the exact stochastic-policy linearization of the Bellman max, and the
// product-form convex-hull weights over deterministic policies.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qswitch/error.hpp"
#include "qswitch/mdp.hpp"

namespace qswitch {

/// Shape of the (state, action) space; enough to build Pi without an Mdp.
struct Dims {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;

  std::size_t n_sa() const { return n_states * n_actions; }
  std::size_t index(std::size_t s, std::size_t a) const { return a * n_states + s; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

inline Dims dims_of(const Mdp& mdp) { return {mdp.n_states(), mdp.n_actions()}; }

struct DeterministicPolicy {
  std::vector<std::size_t> action_of;

  friend bool operator==(const DeterministicPolicy&, const DeterministicPolicy&) = default;
};

/// Row s holds mu(. | s).
class StochasticPolicy {
 public:
  StochasticPolicy() = default;
  explicit StochasticPolicy(Matrix probs, double tol = kSimplexTol) : probs_(std::move(probs)) {
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
      if ((probs_.row(s).array() < 0.0).any())
        throw std::invalid_argument("StochasticPolicy: negative probability at state " + std::to_string(s));
      if (std::abs(probs_.row(s).sum() - 1.0) > tol)
        throw std::invalid_argument("StochasticPolicy: row " + std::to_string(s) + " is not a distribution");
    }
  }

  static StochasticPolicy from(const DeterministicPolicy& pi, const Dims& dims) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(dims.n_states), static_cast<Eigen::Index>(dims.n_actions));
    for (std::size_t s = 0; s < dims.n_states; ++s)
      m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(pi.action_of.at(s))) = 1.0;
    return StochasticPolicy(std::move(m));
  }

  static StochasticPolicy uniform(const Dims& dims) {
    return StochasticPolicy(Matrix::Constant(static_cast<Eigen::Index>(dims.n_states),
                                             static_cast<Eigen::Index>(dims.n_actions),
                                             1.0 / static_cast<double>(dims.n_actions)));
  }

  const Matrix& probs() const { return probs_; }
  double operator()(std::size_t a, std::size_t s) const {
    return probs_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
  }
  std::size_t n_states() const { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(probs_.cols()); }

  friend bool operator==(const StochasticPolicy& a, const StochasticPolicy& b) { return a.probs_ == b.probs_; }

 private:
  Matrix probs_;
};

namespace detail {
inline void check_policy_dims(const StochasticPolicy& mu, const Dims& dims) {
  if (mu.n_states() != dims.n_states || mu.n_actions() != dims.n_actions)
    throw std::invalid_argument("policy dimensions do not match the state-action space");
}
inline void check_policy_dims(const DeterministicPolicy& pi, const Dims& dims) {
  if (pi.action_of.size() != dims.n_states) throw std::invalid_argument("policy must map every state");
  for (std::size_t a : pi.action_of)
    if (a >= dims.n_actions) throw std::invalid_argument("policy action out of range");
}
}  // namespace detail

/// Pi^mu of shape (n_states x n_sa); row s is mu(s)^T (x) e_s^T.
inline Matrix pi_matrix(const StochasticPolicy& mu, const Dims& dims) {
  detail::check_policy_dims(mu, dims);
  Matrix pi = Matrix::Zero(static_cast<Eigen::Index>(dims.n_states), static_cast<Eigen::Index>(dims.n_sa()));
  for (std::size_t s = 0; s < dims.n_states; ++s)
    for (std::size_t a = 0; a < dims.n_actions; ++a)
      pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(dims.index(s, a))) = mu(a, s);
  return pi;
}

inline Matrix pi_matrix(const DeterministicPolicy& policy, const Dims& dims) {
  detail::check_policy_dims(policy, dims);
  Matrix pi = Matrix::Zero(static_cast<Eigen::Index>(dims.n_states), static_cast<Eigen::Index>(dims.n_sa()));
  for (std::size_t s = 0; s < dims.n_states; ++s)
    pi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(dims.index(s, policy.action_of[s]))) = 1.0;
  return pi;
}

inline constexpr std::size_t kPolicyEnumerationCap = 4096;

/// n_actions^n_states grows fast; the cap keeps callers at desk scale.
inline std::size_t policy_count(const Dims& dims, std::size_t cap = kPolicyEnumerationCap) {
  std::size_t count = 1;
  for (std::size_t s = 0; s < dims.n_states; ++s) {
    if (count > cap / dims.n_actions)
      throw BudgetError("policy enumeration: n_actions^n_states exceeds cap " + std::to_string(cap));
    count *= dims.n_actions;
  }
  return count;
}

/// All deterministic policies in lexicographic order of
/// (action_of[0], ..., action_of[n-1]); state 0 is the most significant digit.
inline std::vector<DeterministicPolicy> enumerate_policies(const Dims& dims,
                                                           std::size_t cap = kPolicyEnumerationCap) {
  if (dims.n_states == 0 || dims.n_actions == 0) throw std::invalid_argument("enumerate_policies: empty dims");
  const std::size_t count = policy_count(dims, cap);
  std::vector<DeterministicPolicy> out;
  out.reserve(count);
  DeterministicPolicy cur{std::vector<std::size_t>(dims.n_states, 0)};
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(cur);
    for (std::size_t s = dims.n_states; s-- > 0;) {
      if (++cur.action_of[s] < dims.n_actions) break;
      cur.action_of[s] = 0;
    }
  }
  return out;
}

/// Greedy deterministic policy of q (lowest action index on ties).
inline DeterministicPolicy greedy_policy(const Mdp& mdp, const QVector& q) {
  mdp.check_dims(q);
  DeterministicPolicy pi{std::vector<std::size_t>(mdp.n_states())};
  for (std::size_t s = 0; s < mdp.n_states(); ++s) pi.action_of[s] = greedy_action(mdp, q, s);
  return pi;
}

/// Rounding window for the interpolation weight, relative to the error scale at the state.
inline constexpr double kLambdaClampTol = 1e-12;

/// mu_Q with V_Q - V* = Pi^{mu_Q} (Q - Q*): per state, mix the min-error and
/// max-error actions so the expected action-wise error equals V_Q(s) - V*(s).
inline StochasticPolicy linearize_max(const QVector& q, const QVector& q_star, const Dims& dims) {
  if (static_cast<std::size_t>(q.size()) != dims.n_sa() || static_cast<std::size_t>(q_star.size()) != dims.n_sa())
    throw std::invalid_argument("linearize_max: vector length does not match dims");
  Matrix probs = Matrix::Zero(static_cast<Eigen::Index>(dims.n_states), static_cast<Eigen::Index>(dims.n_actions));
  for (std::size_t s = 0; s < dims.n_states; ++s) {
    auto at = [&](const QVector& v, std::size_t a) { return v(static_cast<Eigen::Index>(dims.index(s, a))); };
    double v_q = at(q, 0);
    double v_star = at(q_star, 0);
    std::size_t a_min = 0;
    std::size_t a_max = 0;
    double e_min = at(q, 0) - at(q_star, 0);
    double e_max = e_min;
    for (std::size_t a = 1; a < dims.n_actions; ++a) {
      v_q = std::max(v_q, at(q, a));
      v_star = std::max(v_star, at(q_star, a));
      const double e = at(q, a) - at(q_star, a);
      if (e < e_min) {
        e_min = e;
        a_min = a;
      }
      if (e > e_max) {
        e_max = e;
        a_max = a;
      }
    }
    const auto row = static_cast<Eigen::Index>(s);
    if (e_min == e_max) {
      probs(row, static_cast<Eigen::Index>(a_min)) = 1.0;
      continue;
    }
    const double y = v_q - v_star;
    double lambda = (y - e_min) / (e_max - e_min);
    const double scale = std::max({1.0, std::abs(e_min), std::abs(e_max), std::abs(v_q), std::abs(v_star)});
    const double window = kLambdaClampTol * scale / (e_max - e_min);
    if (lambda < -window || lambda > 1.0 + window)
      throw InvariantViolation("linearize_max: sandwich bound violated at state " + std::to_string(s));
    lambda = std::clamp(lambda, 0.0, 1.0);
    probs(row, static_cast<Eigen::Index>(a_max)) += lambda;
    probs(row, static_cast<Eigen::Index>(a_min)) += 1.0 - lambda;
  }
  return StochasticPolicy(std::move(probs));
}

/// c_pi(mu) = prod_s mu(pi(s) | s), aligned with enumerate_policies(dims).
inline std::vector<double> hull_weights(const StochasticPolicy& mu, const Dims& dims,
                                        std::size_t cap = kPolicyEnumerationCap) {
  detail::check_policy_dims(mu, dims);
  const auto policies = enumerate_policies(dims, cap);
  std::vector<double> w;
  w.reserve(policies.size());
  for (const auto& pi : policies) {
    double c = 1.0;
    for (std::size_t s = 0; s < dims.n_states; ++s) c *= mu(pi.action_of[s], s);
    w.push_back(c);
  }
  return w;
}

}  // namespace qswitch
