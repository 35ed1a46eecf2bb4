#pragma once

// Lyapunov certificates for a switched linear family:
//   * the product-defined approximant
//       V^t(x) = sum_{l=0}^{t} beta^{-2l} max_{|w|=l} ||A_w x||_2^2
//     with a certified constant C such that ||x||^2 <= V^t(x) <= C ||x||^2 for all t;
//   * common quadratic certificates M^T H M <= beta^2 H (verification and a
//     heuristic search).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qswitch/error.hpp"
#include "qswitch/jsr.hpp"
#include "qswitch/mdp.hpp"

namespace qswitch {

inline constexpr std::size_t kDefaultTruncation = 8;
inline constexpr std::size_t kDefaultVectorBudget = 1'000'000;

struct JsrLyapunov {
  std::vector<Matrix> modes;
  double jsr_upper = 0.0;
  double beta_eps = 0.0;
  double eta = 0.0;
  std::size_t t = kDefaultTruncation;
  std::size_t k_depth = 0;  // K: first depth with max ||A_w|| <= eta^K in `k_norm`
  NormKind k_norm = NormKind::spectral;
  double c0 = 1.0;  // max_w ||A_w||_2 <= c0 eta^{|w|} for every word
  double c_eps = 1.0;  // c0^2 / (1 - (eta/beta_eps)^2)
  std::size_t budget = kDefaultVectorBudget;

  std::size_t dim() const { return modes.empty() ? 0 : static_cast<std::size_t>(modes.front().rows()); }
};

struct VepsOptions {
  std::size_t depth_cap = 24;
  std::size_t product_budget = 2'000'000;
  std::size_t vector_budget = kDefaultVectorBudget;
};

/// beta_eps = upper + eps, eta midway between upper and beta_eps. K is the
/// first depth at which max_{|w|=K} ||A_w|| <= eta^K in the spectral norm,
/// or in the infinity norm where ||.||_2 <= sqrt(n) ||.||_inf supplies the
/// conversion. Submultiplicativity over blocks of length K then gives
/// ||A_w||_2 <= c0 eta^{|w|} for all words.
inline JsrLyapunov veps_constants(std::span<const Matrix> modes, const JsrReport& jsr, double eps, std::size_t t,
                                  const VepsOptions& opts = {}) {
  if (modes.empty()) throw std::invalid_argument("veps_constants: empty family");
  if (!(eps > 0.0)) throw std::invalid_argument("veps_constants: eps must be positive");
  JsrLyapunov lyap;
  lyap.modes.assign(modes.begin(), modes.end());
  lyap.jsr_upper = jsr.upper;
  lyap.beta_eps = jsr.upper + eps;
  lyap.t = t;
  lyap.budget = opts.vector_budget;
  if (!(lyap.beta_eps < 1.0))
    throw std::invalid_argument("veps_constants: upper bracket + eps must be below 1 (got " +
                                std::to_string(lyap.beta_eps) + ")");
  lyap.eta = 0.5 * (jsr.upper + lyap.beta_eps);
  const double eta = lyap.eta;
  const auto n = modes.front().rows();
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  std::vector<double> n2{1.0};
  std::vector<double> ninf{1.0};
  std::vector<Matrix> level{Matrix::Identity(n, n)};
  std::size_t used = 0;
  std::optional<double> best_c0;
  for (std::size_t k = 1; k <= opts.depth_cap && !best_c0; ++k) {
    used += level.size() * modes.size();
    if (used > opts.product_budget)
      throw BudgetError("veps_constants: product budget exhausted at depth " + std::to_string(k));
    std::vector<Matrix> next;
    next.reserve(level.size() * modes.size());
    double s = 0.0;
    double inf = 0.0;
    for (const auto& p : level)
      for (const auto& m : modes) {
        next.push_back(m * p);
        s = std::max(s, spectral_norm(next.back()));
        inf = std::max(inf, infinity_norm(next.back()));
      }
    level = std::move(next);
    const double eta_k = std::pow(eta, static_cast<double>(k));
    // short words, exact
    double head = 0.0;
    for (std::size_t j = 0; j < k; ++j) head = std::max(head, n2[j] / std::pow(eta, static_cast<double>(j)));
    if (s <= eta_k) {
      best_c0 = head;
      lyap.k_depth = k;
      lyap.k_norm = NormKind::spectral;
    }
    if (inf <= eta_k) {
      double tail = 0.0;
      for (std::size_t j = 0; j < k; ++j) tail = std::max(tail, sqrt_n * ninf[j] / std::pow(eta, static_cast<double>(j)));
      const double c = std::max(head, tail);
      if (!best_c0 || c < *best_c0) {
        best_c0 = c;
        lyap.k_depth = k;
        lyap.k_norm = NormKind::infinity;
      }
    }
    n2.push_back(s);
    ninf.push_back(inf);
  }
  if (!best_c0)
    throw BudgetError("veps_constants: no depth K <= " + std::to_string(opts.depth_cap) +
                      " with product norms below eta^K; eps is too small for the bracket");
  lyap.c0 = std::max(1.0, *best_c0);
  const double ratio = eta / lyap.beta_eps;
  lyap.c_eps = lyap.c0 * lyap.c0 / (1.0 - ratio * ratio);
  return lyap;
}

inline JsrLyapunov veps_constants(const SwitchingFamily& fam, const JsrReport& jsr, double eps, std::size_t t,
                                  const VepsOptions& opts = {}) {
  return veps_constants(std::span<const Matrix>(fam.modes), jsr, eps, t, opts);
}

namespace detail {
inline void check_vector_budget(std::size_t modes, std::size_t t, std::size_t budget) {
  std::size_t total = 1;
  std::size_t level = 1;
  for (std::size_t l = 1; l <= t; ++l) {
    if (level > budget / std::max<std::size_t>(modes, 1)) throw BudgetError("veps_eval: vector budget exceeded");
    level *= modes;
    total += level;
    if (total > budget) throw BudgetError("veps_eval: vector budget exceeded");
  }
}
}  // namespace detail

/// V^0(x), ..., V^t(x) by forward propagation of the vector set {A_w x}.
inline std::vector<double> veps_profile(const JsrLyapunov& lyap, const Vector& x, std::size_t t) {
  if (static_cast<std::size_t>(x.size()) != lyap.dim()) throw std::invalid_argument("veps_eval: dimension mismatch");
  detail::check_vector_budget(lyap.modes.size(), t, lyap.budget);
  const double inv_b2 = 1.0 / (lyap.beta_eps * lyap.beta_eps);
  std::vector<double> out;
  out.reserve(t + 1);
  Matrix set = x;
  double acc = x.squaredNorm();
  double weight = 1.0;
  out.push_back(acc);
  const auto m = static_cast<Eigen::Index>(lyap.modes.size());
  for (std::size_t l = 1; l <= t; ++l) {
    Matrix next(set.rows(), set.cols() * m);
    for (Eigen::Index i = 0; i < m; ++i)
      next.middleCols(i * set.cols(), set.cols()).noalias() = lyap.modes[static_cast<std::size_t>(i)] * set;
    set = std::move(next);
    weight *= inv_b2;
    acc += weight * set.colwise().squaredNorm().maxCoeff();
    out.push_back(acc);
  }
  return out;
}

inline double veps_eval(const JsrLyapunov& lyap, const Vector& x, std::size_t t) { return veps_profile(lyap, x, t).back(); }
inline double veps_eval(const JsrLyapunov& lyap, const Vector& x) { return veps_eval(lyap, x, lyap.t); }

/// Certified bound on V^infinity(x) - V^t(x): the tail of the geometric
/// envelope c0^2 (eta/beta)^{2l} ||x||^2 for l > t.
inline double veps_tail_bound(const JsrLyapunov& lyap, const Vector& x, std::size_t t) {
  const double ratio2 = std::pow(lyap.eta / lyap.beta_eps, 2.0);
  return lyap.c_eps * std::pow(ratio2, static_cast<double>(t + 1)) * x.squaredNorm();
}

/// max over samples x and matrices A in modes + extra of
///   V^t(A x) - beta^2 (V^{t+1}(x) - ||x||^2),
/// clipped below at zero. `extra` carries stochastic-policy matrices M_mu.
inline double veps_drift_check(const JsrLyapunov& lyap, std::span<const Vector> xs, std::span<const Matrix> extra = {}) {
  const double b2 = lyap.beta_eps * lyap.beta_eps;
  double worst = 0.0;
  for (const auto& x : xs) {
    const double rhs = b2 * (veps_eval(lyap, x, lyap.t + 1) - x.squaredNorm());
    auto check = [&](const Matrix& a) { worst = std::max(worst, veps_eval(lyap, a * x, lyap.t) - rhs); };
    for (const auto& m : lyap.modes) check(m);
    for (const auto& m : extra) check(m);
  }
  return worst;
}

inline nlohmann::json to_json(const JsrLyapunov& l, std::size_t jsr_depth) {
  return {{"type", "jsr"},     {"beta", l.beta_eps},       {"C_eps", l.c_eps}, {"C0", l.c0},
          {"eta", l.eta},      {"K", l.k_depth},           {"K_norm", to_string(l.k_norm)},
          {"t", l.t},          {"depth", jsr_depth},       {"jsr_upper", l.jsr_upper},
          {"lambda_min", nullptr}, {"lambda_max", nullptr}};
}

// ---------------------------------------------------------------- quadratic

inline constexpr double kPsdTol = 1e-10;

struct QuadraticCertificate {
  Matrix h;
  double beta = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  bool feasible = false;
  /// max over modes of lambda_max(M^T H M - beta^2 H); <= kPsdTol when feasible
  double worst_margin = std::numeric_limits<double>::infinity();
};

inline double max_eigenvalue_sym(const Matrix& a) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline QuadraticCertificate quad_verify(std::span<const Matrix> modes, const Matrix& h, double beta) {
  if (h.rows() != h.cols() || h.rows() == 0) throw std::invalid_argument("quad_verify: H must be square");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("quad_verify: H is not symmetric");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("quad_verify: beta must lie in (0,1)");
  QuadraticCertificate c;
  c.h = 0.5 * (h + h.transpose());
  c.beta = beta;
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.h, Eigen::EigenvaluesOnly);
  c.lambda_min = es.eigenvalues().minCoeff();
  c.lambda_max = es.eigenvalues().maxCoeff();
  c.worst_margin = -std::numeric_limits<double>::infinity();
  for (const auto& m : modes) {
    if (m.rows() != h.rows() || m.cols() != h.cols()) throw std::invalid_argument("quad_verify: dimension mismatch");
    c.worst_margin = std::max(c.worst_margin, max_eigenvalue_sym(m.transpose() * c.h * m - beta * beta * c.h));
  }
  c.feasible = c.lambda_min > 0.0 && c.worst_margin <= kPsdTol;
  return c;
}

struct QuadSearchAttempt {
  double beta = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  bool verified = false;
};

struct QuadSearchResult {
  /// "certificate found" or "procedure failed"; failure says nothing about
  /// whether a common quadratic certificate exists.
  bool found = false;
  std::optional<QuadraticCertificate> certificate;
  std::vector<QuadSearchAttempt> attempts;

  std::string status() const { return found ? "certificate found" : "procedure failed"; }
};

struct QuadSearchOptions {
  std::size_t max_iterations = 200'000;
  double rel_tol = 1e-13;
  double divergence = 1e12;
};

/// Heuristic: for each beta (smallest first) iterate
///   H <- I + beta^{-2} mean_pi M_pi^T H M_pi
/// to its fixed point, then verify. For a single mode this is the discrete
/// Lyapunov equation and succeeds whenever rho(M) < beta.
inline QuadSearchResult quad_search(std::span<const Matrix> modes, std::vector<double> beta_grid,
                                    const QuadSearchOptions& opts = {}) {
  if (modes.empty()) throw std::invalid_argument("quad_search: empty family");
  for (double b : beta_grid)
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("quad_search: beta grid must lie in (0,1)");
  std::sort(beta_grid.begin(), beta_grid.end());
  const auto n = modes.front().rows();
  const Matrix eye = Matrix::Identity(n, n);
  QuadSearchResult res;
  for (double beta : beta_grid) {
    QuadSearchAttempt at;
    at.beta = beta;
    const double w = 1.0 / (beta * beta * static_cast<double>(modes.size()));
    Matrix h = eye;
    for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
      Matrix acc = Matrix::Zero(n, n);
      for (const auto& m : modes) acc.noalias() += m.transpose() * h * m;
      Matrix next = eye + w * acc;
      const double change = (next - h).norm();
      h = std::move(next);
      at.iterations = it;
      if (!std::isfinite(change) || h.norm() > opts.divergence) break;
      if (change <= opts.rel_tol * h.norm()) {
        at.converged = true;
        break;
      }
    }
    if (at.converged) {
      QuadraticCertificate c = quad_verify(modes, 0.5 * (h + h.transpose()), beta);
      at.verified = c.feasible;
      if (c.feasible) {
        res.attempts.push_back(at);
        res.found = true;
        res.certificate = std::move(c);
        return res;
      }
    }
    res.attempts.push_back(at);
  }
  return res;
}

/// max over mixtures M_mu of lambda_max(M_mu^T H M_mu - beta^2 H).
inline double quad_extend_check(const QuadraticCertificate& cert, std::span<const Matrix> mixtures) {
  if (!cert.feasible) throw std::invalid_argument("quad_extend_check: certificate is not feasible");
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& m : mixtures)
    worst = std::max(worst, max_eigenvalue_sym(m.transpose() * cert.h * m - cert.beta * cert.beta * cert.h));
  return worst;
}

inline nlohmann::json to_json(const QuadraticCertificate& c) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(c.h.size()));
  for (Eigen::Index i = 0; i < c.h.rows(); ++i)
    for (Eigen::Index j = 0; j < c.h.cols(); ++j) flat.push_back(c.h(i, j));
  return {{"type", "quad"},
          {"beta", c.beta},
          {"H", flat},
          {"n", c.h.rows()},
          {"lambda_min", c.lambda_min},
          {"lambda_max", c.lambda_max},
          {"feasible", c.feasible},
          {"worst_margin", c.worst_margin}};
}

}  // namespace qswitch
