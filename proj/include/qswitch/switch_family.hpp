#pragma once

// Switching-system matrices of the Q-learning error recursion: direct modes
// M_mu = I - alpha D + alpha gamma D P Pi^mu, affine modes (A_pi, b_pi),
// Markovian sample-path modes, the Markovian sampling bias, and residual
// checks of the exact representations on recorded trajectories.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qswitch/error.hpp"
#include "qswitch/mdp.hpp"
#include "qswitch/policies.hpp"
#include "qswitch/qlearn.hpp"

namespace qswitch {

inline constexpr double kFamilyTol = 1e-12;

namespace detail {
inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("step size alpha must lie in (0,1)");
}

inline Matrix direct_mode_from_pi(const Mdp& mdp, const Vector& d, double alpha, const Matrix& pi) {
  const auto n = static_cast<Eigen::Index>(mdp.n_sa());
  Matrix m = Matrix::Identity(n, n);
  m.diagonal() -= alpha * d;
  m.noalias() += (alpha * mdp.gamma()) * (d.asDiagonal() * (mdp.p_matrix() * pi));
  return m;
}
}  // namespace detail

inline Matrix direct_mode(const Mdp& mdp, const Vector& d, double alpha, const StochasticPolicy& mu) {
  detail::check_alpha(alpha);
  detail::check_distribution(d, mdp.n_sa(), "direct_mode");
  return detail::direct_mode_from_pi(mdp, d, alpha, pi_matrix(mu, dims_of(mdp)));
}

inline Matrix direct_mode(const Mdp& mdp, const Vector& d, double alpha, const DeterministicPolicy& pi) {
  detail::check_alpha(alpha);
  detail::check_distribution(d, mdp.n_sa(), "direct_mode");
  return detail::direct_mode_from_pi(mdp, d, alpha, pi_matrix(pi, dims_of(mdp)));
}

/// The deterministic family {M_pi : pi in Theta} together with the data it was built from.
struct SwitchingFamily {
  Dims dims;
  double alpha = 0.0;
  double gamma = 0.0;
  Vector d;
  double d_min = 0.0;
  std::vector<DeterministicPolicy> policies;
  std::vector<Matrix> modes;  // aligned with policies

  std::size_t size() const { return modes.size(); }
  /// 1 - alpha d_min (1 - gamma): a common infinity-norm bound on every mode.
  double rho_row() const { return 1.0 - alpha * d_min * (1.0 - gamma); }
};

/// Builds every M_pi and checks nonnegativity and the row-sum bound.
inline SwitchingFamily build_family(const Mdp& mdp, const Vector& d, double alpha,
                                    std::size_t cap = kPolicyEnumerationCap) {
  detail::check_alpha(alpha);
  detail::check_distribution(d, mdp.n_sa(), "build_family");
  SwitchingFamily fam;
  fam.dims = dims_of(mdp);
  fam.alpha = alpha;
  fam.gamma = mdp.gamma();
  fam.d = d;
  fam.d_min = d.minCoeff();
  fam.policies = enumerate_policies(fam.dims, cap);
  fam.modes.reserve(fam.policies.size());
  const double rho_row = fam.rho_row();
  for (const auto& pi : fam.policies) {
    Matrix m = detail::direct_mode_from_pi(mdp, d, alpha, pi_matrix(pi, fam.dims));
    if ((m.array() < -kFamilyTol).any()) throw InvariantViolation("build_family: mode has a negative entry");
    if (m.rowwise().sum().maxCoeff() > rho_row + kFamilyTol)
      throw InvariantViolation("build_family: mode row sum exceeds 1 - alpha d_min (1 - gamma)");
    fam.modes.push_back(std::move(m));
  }
  return fam;
}

/// sum_pi c_pi(mu) M_pi, the convex-hull reconstruction of M_mu.
inline Matrix hull_combination(const SwitchingFamily& fam, const StochasticPolicy& mu) {
  const auto w = hull_weights(mu, fam.dims);
  Matrix out = Matrix::Zero(fam.modes.front().rows(), fam.modes.front().cols());
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) out += w[i] * fam.modes[i];
  return out;
}

struct AffineMode {
  Matrix a;
  Vector b;
  DeterministicPolicy greedy;
  DeterministicPolicy optimal;
};

/// (A_{pi_Q}, b_{pi_Q}) with b = alpha gamma D P (Pi^{pi_Q} - Pi^{pi*}) Q*.
inline AffineMode affine_mode(const Mdp& mdp, const Vector& d, double alpha, const QVector& q, const QVector& q_star) {
  detail::check_alpha(alpha);
  detail::check_distribution(d, mdp.n_sa(), "affine_mode");
  AffineMode out;
  out.greedy = greedy_policy(mdp, q);
  out.optimal = greedy_policy(mdp, q_star);
  const Dims dims = dims_of(mdp);
  const Matrix pi_q = pi_matrix(out.greedy, dims);
  out.a = detail::direct_mode_from_pi(mdp, d, alpha, pi_q);
  out.b = (alpha * mdp.gamma()) * (d.asDiagonal() * (mdp.p_matrix() * ((pi_q - pi_matrix(out.optimal, dims)) * q_star)));
  return out;
}

/// hat M_{i,mu} = I - alpha e_i e_i^T + alpha gamma e_i e_i^T P Pi^mu: only row i differs from I.
inline Matrix markov_mode(const Mdp& mdp, double alpha, std::size_t coord, const StochasticPolicy& mu) {
  detail::check_alpha(alpha);
  if (coord >= mdp.n_sa()) throw std::invalid_argument("markov_mode: coordinate out of range");
  const auto n = static_cast<Eigen::Index>(mdp.n_sa());
  const auto i = static_cast<Eigen::Index>(coord);
  Matrix m = Matrix::Identity(n, n);
  m(i, i) -= alpha;
  m.row(i) += (alpha * mdp.gamma()) * (mdp.p_matrix().row(i) * pi_matrix(mu, dims_of(mdp)));
  return m;
}

/// b^M = (e_X e_X^T - D)(gamma P Pi^mu - I) e.
inline Vector markov_bias(const Vector& d, std::size_t coord, const StochasticPolicy& mu, const Vector& e,
                          const Mdp& mdp) {
  if (static_cast<std::size_t>(d.size()) != mdp.n_sa() || static_cast<std::size_t>(e.size()) != mdp.n_sa())
    throw std::invalid_argument("markov_bias: dimension mismatch");
  if (coord >= mdp.n_sa()) throw std::invalid_argument("markov_bias: coordinate out of range");
  const Vector drift = mdp.gamma() * (mdp.p_matrix() * (pi_matrix(mu, dims_of(mdp)) * e)) - e;
  Vector out = -(d.asDiagonal() * drift);
  out(static_cast<Eigen::Index>(coord)) += drift(static_cast<Eigen::Index>(coord));
  return out;
}

// ---------------------------------------------------------------- verification

struct RepresentationResiduals {
  double direct = 0.0;         // i.i.d.: ||e_{k+1} - M_{mu_k} e_k - alpha w_k||_inf
                               // Markovian: ||e_{k+1} - hat M_{X_k,mu_k} e_k - alpha xi_{k+1}||_inf
  double averaged = 0.0;       // Markovian only: ||e_{k+1} - M_{mu_k} e_k - alpha b^M_k - alpha xi_{k+1}||_inf
  double affine = 0.0;         // i.i.d. only: ||e_{k+1} - A_{pi_k} e_k - b_{pi_k} - alpha w_k||_inf
  double linearization = 0.0;  // ||Pi^{mu_k} e_k - (V_{Q_k} - V*)||_inf
  std::size_t steps = 0;
};

/// Replays a trajectory, recomputes mu_k = linearize_max(Q_k, Q*) and measures
/// the residual of every exact representation at every step. Needs the
/// recorded noise.
inline RepresentationResiduals verify_direct_representation(const Mdp& mdp, const TrajectoryRecord& rec,
                                                            const QVector& q_star) {
  mdp.check_dims(q_star);
  if (rec.noise.size() != rec.steps.size())
    throw std::invalid_argument("verify_direct_representation: trajectory was recorded without noise");
  if (static_cast<std::size_t>(rec.d.size()) != mdp.n_sa())
    throw std::invalid_argument("verify_direct_representation: dimension mismatch");
  const std::vector<QVector> qs = rec.q.size() == rec.steps.size() + 1 ? rec.q : replay(mdp, rec);
  const Dims dims = dims_of(mdp);
  const Vector v_star = state_values(mdp, q_star);
  RepresentationResiduals out;
  out.steps = rec.steps.size();
  for (std::size_t k = 0; k < rec.steps.size(); ++k) {
    const Vector e = qs[k] - q_star;
    const Vector e_next = qs[k + 1] - q_star;
    const Vector& noise = rec.noise[k];
    if (static_cast<std::size_t>(noise.size()) != mdp.n_sa())
      throw std::invalid_argument("verify_direct_representation: noise dimension mismatch");
    const StochasticPolicy mu = linearize_max(qs[k], q_star, dims);
    out.linearization = std::max(
        out.linearization, (pi_matrix(mu, dims) * e - (state_values(mdp, qs[k]) - v_star)).lpNorm<Eigen::Infinity>());
    const Matrix m_mu = detail::direct_mode_from_pi(mdp, rec.d, rec.alpha, pi_matrix(mu, dims));
    if (rec.mode == SamplingMode::iid) {
      out.direct = std::max(out.direct, (e_next - m_mu * e - rec.alpha * noise).lpNorm<Eigen::Infinity>());
      const AffineMode aff = affine_mode(mdp, rec.d, rec.alpha, qs[k], q_star);
      out.affine = std::max(out.affine, (e_next - aff.a * e - aff.b - rec.alpha * noise).lpNorm<Eigen::Infinity>());
    } else {
      const std::size_t x = rec.steps[k].coord;
      const Matrix hat_m = markov_mode(mdp, rec.alpha, x, mu);
      out.direct = std::max(out.direct, (e_next - hat_m * e - rec.alpha * noise).lpNorm<Eigen::Infinity>());
      const Vector bias = markov_bias(rec.d, x, mu, e, mdp);
      out.averaged =
          std::max(out.averaged, (e_next - m_mu * e - rec.alpha * bias - rec.alpha * noise).lpNorm<Eigen::Infinity>());
    }
  }
  return out;
}

/// Dense matrix as CSV rows, full precision.
inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
  const auto old = os.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace qswitch
