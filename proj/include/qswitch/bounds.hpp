#pragma once

// Closed-form finite-time bounds and sample-complexity plans for
// constant-step-size Q-learning under a JSR-induced or quadratic Lyapunov
// certificate, for i.i.d. and single-trajectory Markovian sampling.
// Pure evaluators: no simulation happens here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qswitch/error.hpp"

namespace qswitch {

/// Problem data shared by every bound.
struct ProblemConstants {
  double alpha = 0.0;
  double gamma = 0.0;
  double w_max = 0.0;
  double b_q = 0.0;
  double d_min = 0.0;
  std::size_t n_sa = 0;
  double q0_inf = 0.0;
  double r_max = 0.0;
  double e0_norm2 = 0.0;  // ||Q_0 - Q*||_2

  /// ||Q_0||_inf + R_max/(1-gamma), the explicit replacement of ||Q_0 - Q*||_2 / sqrt(n).
  double initial_envelope() const { return q0_inf + r_max / (1.0 - gamma); }
};

/// JSR-certificate constants. `v0` is the value substituted for V^inf(e_0)
/// in the moment bound; by default C ||e_0||^2.
struct VepsCertificateConstants {
  double beta = 0.0;
  double c_eps = 1.0;
  std::optional<double> v0;
};

struct QuadCertificateConstants {
  double beta = 0.0;
  double lambda_min = 1.0;
  double lambda_max = 1.0;
  double v0 = 0.0;  // e_0^T H e_0
};

struct BoundValue {
  double moment = 0.0;          // bound on E[V(e_k)]
  double final_general = 0.0;   // bound on E||e_k||_inf via ||e_0||_2
  double final_explicit = 0.0;  // bound on E||e_k||_inf via ||Q_0||_inf + R_max/(1-gamma)
  double floor = 0.0;           // k-independent part of the final bounds
};

/// W_max + (4 (1+gamma) B_Q)^2.
inline double markov_disturbance(double w_max, double gamma, double b_q) {
  const double bias = 4.0 * (1.0 + gamma) * b_q;
  return w_max + bias * bias;
}

namespace detail {
inline void check_rate(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("certificate rate must lie in (0,1)");
}

inline BoundValue veps_like(const ProblemConstants& p, const VepsCertificateConstants& c, double disturbance,
                            std::size_t k) {
  check_rate(c.beta);
  if (c.c_eps < 1.0) throw std::invalid_argument("C_eps must be at least 1");
  const double b2 = c.beta * c.beta;
  const double bk = std::pow(c.beta, static_cast<double>(k));
  const double b2k = bk * bk;
  const double v0 = c.v0.value_or(c.c_eps * p.e0_norm2 * p.e0_norm2);
  BoundValue v;
  v.moment = b2k * v0 + p.alpha * p.alpha * c.c_eps * c.c_eps * disturbance / (1.0 - b2) * (1.0 - b2k);
  v.floor = p.alpha * c.c_eps * std::sqrt(disturbance / (1.0 - b2));
  v.final_general = std::sqrt(c.c_eps) * bk * p.e0_norm2 + v.floor;
  v.final_explicit =
      std::sqrt(static_cast<double>(p.n_sa) * c.c_eps) * p.initial_envelope() * bk + v.floor;
  return v;
}
}  // namespace detail

/// i.i.d. sampling, JSR certificate.
inline BoundValue veps_bound(const ProblemConstants& p, const VepsCertificateConstants& c, std::size_t k) {
  return detail::veps_like(p, c, p.w_max, k);
}

/// Single-trajectory Markovian sampling: W_max enlarged by the sampling bias.
inline BoundValue markov_bound(const ProblemConstants& p, const VepsCertificateConstants& c, std::size_t k) {
  return detail::veps_like(p, c, markov_disturbance(p.w_max, p.gamma, p.b_q), k);
}

/// i.i.d. sampling, common quadratic certificate.
inline BoundValue quad_bound(const ProblemConstants& p, const QuadCertificateConstants& c, std::size_t k) {
  detail::check_rate(c.beta);
  if (!(c.lambda_min > 0.0)) throw std::invalid_argument("quad_bound: H must be positive definite");
  const double b2 = c.beta * c.beta;
  const double bk = std::pow(c.beta, static_cast<double>(k));
  const double b2k = bk * bk;
  const double cond = c.lambda_max / c.lambda_min;
  BoundValue v;
  v.moment = b2k * c.v0 + p.alpha * p.alpha * c.lambda_max * p.w_max / (1.0 - b2) * (1.0 - b2k);
  v.floor = p.alpha * std::sqrt(c.lambda_max * p.w_max / (c.lambda_min * (1.0 - b2)));
  v.final_general = std::sqrt(cond) * bk * p.e0_norm2 + v.floor;
  v.final_explicit = std::sqrt(static_cast<double>(p.n_sa) * cond) * p.initial_envelope() * bk + v.floor;
  return v;
}

struct RowSlackValue {
  double eps = 0.0;        // alpha d_min (1-gamma) / 2
  double beta_max = 0.0;   // 1 - eps, an upper bound on beta_eps
  double transient = 0.0;
  double floor = 0.0;
  double value = 0.0;
};

/// Markovian bound with the slack tied to the row-sum gap; the transient
/// decays as exp(-alpha d_min (1-gamma) k / 2).
inline RowSlackValue rowslack_bound(const ProblemConstants& p, double c_eps, std::size_t k) {
  const double x = p.alpha * p.d_min * (1.0 - p.gamma);
  if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("rowslack_bound: alpha d_min (1-gamma) must lie in (0,1)");
  RowSlackValue v;
  v.eps = 0.5 * x;
  v.beta_max = 1.0 - v.eps;
  if (1.0 - v.beta_max * v.beta_max < 0.5 * x) throw InvariantViolation("rowslack_bound: spectral gap estimate failed");
  const double w = markov_disturbance(p.w_max, p.gamma, p.b_q);
  v.transient = std::sqrt(static_cast<double>(p.n_sa) * c_eps) * p.initial_envelope() *
                std::exp(-x * static_cast<double>(k) / 2.0);
  v.floor = c_eps * std::sqrt(2.0 * p.alpha * w / (p.d_min * (1.0 - p.gamma)));
  v.value = v.transient + v.floor;
  return v;
}

// ---------------------------------------------------------------- exponential forms

/// JSR bound with beta^k replaced by exp(-(1-beta^2) k / 2); `disturbance` is
/// W_max (i.i.d.) or the enlarged Markovian constant.
inline double veps_exp_bound(const ProblemConstants& p, double beta, double c_eps, double disturbance, std::size_t k) {
  detail::check_rate(beta);
  const double gap = 1.0 - beta * beta;
  return std::sqrt(static_cast<double>(p.n_sa) * c_eps) * p.initial_envelope() *
             std::exp(-gap * static_cast<double>(k) / 2.0) +
         p.alpha * c_eps * std::sqrt(disturbance / gap);
}

/// JSR bound when 1 - beta^2 >= alpha d_min (1-gamma)/2 is the only gap information.
inline double veps_rowgap_bound(const ProblemConstants& p, double c_eps, std::size_t k) {
  const double x = p.alpha * p.d_min * (1.0 - p.gamma);
  return std::sqrt(static_cast<double>(p.n_sa) * c_eps) * p.initial_envelope() *
             std::exp(-x * static_cast<double>(k) / 4.0) +
         c_eps * std::sqrt(2.0 * p.alpha * p.w_max / (p.d_min * (1.0 - p.gamma)));
}

/// Quadratic-certificate bound under beta^2 <= 1 - alpha d_min (1-gamma)/2.
inline double quad_gap_bound(const ProblemConstants& p, double lambda_min, double lambda_max, std::size_t k) {
  const double x = p.alpha * p.d_min * (1.0 - p.gamma);
  const double cond = lambda_max / lambda_min;
  return std::sqrt(static_cast<double>(p.n_sa) * cond) * p.initial_envelope() *
             std::exp(-x * static_cast<double>(k) / 4.0) +
         std::sqrt(2.0 * p.alpha * lambda_max * p.w_max / (lambda_min * p.d_min * (1.0 - p.gamma)));
}

// ---------------------------------------------------------------- sample complexity

enum class PlanKind { veps, veps_rowgap, quad, markov };

inline const char* to_string(PlanKind k) {
  switch (k) {
    case PlanKind::veps: return "veps";
    case PlanKind::veps_rowgap: return "veps_rowgap";
    case PlanKind::quad: return "quad";
    case PlanKind::markov: return "markov";
  }
  return "?";
}

struct PlanInputs {
  double beta = 0.0;  // beta_eps (JSR) or beta (quadratic); unused by veps_rowgap
  double c_eps = 1.0;
  double lambda_min = 1.0;
  double lambda_max = 1.0;
};

struct SampleComplexityPlan {
  PlanKind kind = PlanKind::veps;
  double delta = 0.0;
  double alpha_max = 0.0;
  std::size_t k_min = 0;
  bool alpha_gap_limited = false;  // quad: alpha shrunk to meet beta^2 <= 1 - alpha d_min (1-gamma)/2
  double achieved = 0.0;           // matching bound evaluated at (alpha_max, k_min)
};

namespace detail {
inline std::size_t ceil_iterations(double v) {
  if (!(v > 0.0)) return 0;
  const double c = std::ceil(v);
  if (c > static_cast<double>(std::numeric_limits<std::size_t>::max() / 2))
    throw std::invalid_argument("sample_complexity: iteration count overflows");
  return static_cast<std::size_t>(c);
}
inline double clamp_step(double a) { return std::min(a, std::nextafter(1.0, 0.0)); }
}  // namespace detail

/// Step size and iteration count that make the matching final bound <= delta,
/// each of transient and floor taking at most delta/2. `problem.alpha` is ignored.
inline SampleComplexityPlan sample_complexity(PlanKind kind, double delta, const ProblemConstants& problem,
                                              const PlanInputs& in) {
  if (!(delta > 0.0)) throw std::invalid_argument("sample_complexity: delta must be positive");
  ProblemConstants p = problem;
  SampleComplexityPlan plan;
  plan.kind = kind;
  plan.delta = delta;
  const double a0 = p.initial_envelope();
  const double n = static_cast<double>(p.n_sa);
  const double x1 = p.d_min * (1.0 - p.gamma);
  switch (kind) {
    case PlanKind::veps:
    case PlanKind::markov: {
      detail::check_rate(in.beta);
      const double gap = 1.0 - in.beta * in.beta;
      const double w = kind == PlanKind::veps ? p.w_max : markov_disturbance(p.w_max, p.gamma, p.b_q);
      plan.alpha_max = detail::clamp_step(delta * std::sqrt(gap) / (2.0 * in.c_eps * std::sqrt(w)));
      plan.k_min = detail::ceil_iterations(2.0 / gap * std::log(2.0 * std::sqrt(n * in.c_eps) * a0 / delta));
      p.alpha = plan.alpha_max;
      plan.achieved = veps_exp_bound(p, in.beta, in.c_eps, w, plan.k_min);
      break;
    }
    case PlanKind::veps_rowgap: {
      plan.alpha_max = detail::clamp_step(x1 * delta * delta / (8.0 * in.c_eps * in.c_eps * p.w_max));
      plan.k_min = detail::ceil_iterations(4.0 / (x1 * plan.alpha_max) *
                                           std::log(2.0 * std::sqrt(n * in.c_eps) * a0 / delta));
      p.alpha = plan.alpha_max;
      plan.achieved = veps_rowgap_bound(p, in.c_eps, plan.k_min);
      break;
    }
    case PlanKind::quad: {
      detail::check_rate(in.beta);
      const double cond = in.lambda_max / in.lambda_min;
      double alpha = x1 * delta * delta / (8.0 * cond * p.w_max);
      const double gap_limit = 2.0 * (1.0 - in.beta * in.beta) / x1;
      if (alpha > gap_limit) {
        alpha = gap_limit;
        plan.alpha_gap_limited = true;
      }
      plan.alpha_max = detail::clamp_step(alpha);
      plan.k_min = detail::ceil_iterations(4.0 / (x1 * plan.alpha_max) *
                                           std::log(2.0 * std::sqrt(n * cond) * a0 / delta));
      p.alpha = plan.alpha_max;
      plan.achieved = quad_gap_bound(p, in.lambda_min, in.lambda_max, plan.k_min);
      break;
    }
  }
  return plan;
}

inline nlohmann::json to_json(const SampleComplexityPlan& s) {
  return {{"kind", to_string(s.kind)}, {"delta", s.delta}, {"alpha_max", s.alpha_max}, {"k_min", s.k_min},
          {"alpha_gap_limited", s.alpha_gap_limited}, {"achieved", s.achieved}};
}

// ---------------------------------------------------------------- curves

enum class CurveKind { veps_moment, veps_final, quad_moment, quad_final, markov_moment, markov_final, markov_rowslack };

inline const char* to_string(CurveKind k) {
  switch (k) {
    case CurveKind::veps_moment: return "veps_moment";
    case CurveKind::veps_final: return "veps_final";
    case CurveKind::quad_moment: return "quad_moment";
    case CurveKind::quad_final: return "quad_final";
    case CurveKind::markov_moment: return "markov_moment";
    case CurveKind::markov_final: return "markov_final";
    case CurveKind::markov_rowslack: return "markov_rowslack";
  }
  return "?";
}

struct BoundCurve {
  CurveKind kind = CurveKind::veps_final;
  std::vector<std::size_t> k;
  std::vector<double> value;
};

/// `ks` is the list of iteration indices to evaluate. Final curves use the explicit form.
inline BoundCurve make_curve(CurveKind kind, const ProblemConstants& p, const VepsCertificateConstants* veps,
                             const QuadCertificateConstants* quad, const std::vector<std::size_t>& ks) {
  BoundCurve c;
  c.kind = kind;
  c.k = ks;
  c.value.reserve(ks.size());
  auto need = [](const void* ptr, const char* what) {
    if (!ptr) throw std::invalid_argument(std::string("make_curve: missing ") + what + " constants");
  };
  for (std::size_t k : ks) {
    switch (kind) {
      case CurveKind::veps_moment: need(veps, "jsr"); c.value.push_back(veps_bound(p, *veps, k).moment); break;
      case CurveKind::veps_final: need(veps, "jsr"); c.value.push_back(veps_bound(p, *veps, k).final_explicit); break;
      case CurveKind::markov_moment: need(veps, "jsr"); c.value.push_back(markov_bound(p, *veps, k).moment); break;
      case CurveKind::markov_final: need(veps, "jsr"); c.value.push_back(markov_bound(p, *veps, k).final_explicit); break;
      case CurveKind::markov_rowslack: need(veps, "jsr"); c.value.push_back(rowslack_bound(p, veps->c_eps, k).value); break;
      case CurveKind::quad_moment: need(quad, "quad"); c.value.push_back(quad_bound(p, *quad, k).moment); break;
      case CurveKind::quad_final: need(quad, "quad"); c.value.push_back(quad_bound(p, *quad, k).final_explicit); break;
    }
  }
  return c;
}

inline void write_curve_csv(std::ostream& os, const BoundCurve& c) {
  const auto old = os.precision(17);
  os << "k,value\n";
  for (std::size_t i = 0; i < c.k.size(); ++i) os << c.k[i] << ',' << c.value[i] << '\n';
  os.precision(old);
}

inline nlohmann::json to_json(const ProblemConstants& p) {
  return {{"alpha", p.alpha}, {"gamma", p.gamma}, {"w_max", p.w_max},   {"b_q", p.b_q},   {"d_min", p.d_min},
          {"n_sa", p.n_sa},   {"q0_inf", p.q0_inf}, {"r_max", p.r_max}, {"e0_norm2", p.e0_norm2}};
}

inline nlohmann::json to_json(const BoundCurve& c) {
  return {{"kind", to_string(c.kind)}, {"k", c.k}, {"value", c.value}};
}

}  // namespace qswitch
