#pragma once

// Joint spectral radius brackets by product enumeration with
// branch-and-bound pruning.
//
//   lower = max over explored words w of rho(A_w)^{1/|w|}
//   upper = min over depths k of max over a complete prefix set W_k of ||A_w||^{1/|w|}
//
// W_k holds every explored word of length k plus every word pruned at a
// shorter length; each infinite word has a prefix in W_k, so the maximum over
// W_k bounds the JSR from above for any submultiplicative norm. Without
// pruning this is the usual max_{|w|=k} ||A_w||^{1/k}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qswitch/error.hpp"
#include "qswitch/mdp.hpp"
#include "qswitch/switch_family.hpp"

namespace qswitch {

enum class NormKind { spectral, infinity };

inline const char* to_string(NormKind n) { return n == NormKind::spectral ? "spectral" : "infinity"; }

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.transpose() * a, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline double infinity_norm(const Matrix& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

inline double matrix_norm(const Matrix& a, NormKind kind) {
  return kind == NormKind::spectral ? spectral_norm(a) : infinity_norm(a);
}

inline double spectral_radius(const Matrix& a) {
  if (a.rows() == 1) return std::abs(a(0, 0));
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct JsrOptions {
  std::size_t max_depth = 8;
  std::size_t budget = 2'000'000;  // matrix products evaluated
  double prune_slack = 0.999;
  bool use_infinity_norm = true;  // spectral is always used
};

struct JsrReport {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  std::size_t depth = 0;  // deepest fully explored level
  NormKind norm_used = NormKind::spectral;
  std::size_t upper_depth = 0;  // level at which `upper` was attained
  double rho_row = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> witness;  // word achieving `lower`; witness[0] is applied first
  std::vector<double> lower_by_depth;  // running bracket after each level
  std::vector<double> upper_by_depth;
  std::size_t products = 0;
  std::size_t pruned = 0;
};

namespace detail {
inline double root(double v, std::size_t k) { return v <= 0.0 ? 0.0 : std::pow(v, 1.0 / static_cast<double>(k)); }

struct WordNode {
  Matrix product;
  std::vector<std::size_t> word;
};
}  // namespace detail

/// Bracket [lower, upper] containing the JSR of `modes`. Exploration is
/// breadth-first and lexicographic in mode index, so results are reproducible.
inline JsrReport jsr_bounds(std::span<const Matrix> modes, const JsrOptions& opts = {}) {
  if (modes.empty()) throw std::invalid_argument("jsr_bounds: empty family");
  if (opts.max_depth == 0) throw std::invalid_argument("jsr_bounds: max_depth must be at least 1");
  const auto n = modes.front().rows();
  for (const auto& m : modes)
    if (m.rows() != n || m.cols() != n) throw std::invalid_argument("jsr_bounds: modes must be square and equal-sized");
  if (opts.budget < modes.size()) throw BudgetError("jsr_bounds: budget smaller than the family");

  std::vector<NormKind> norms{NormKind::spectral};
  if (opts.use_infinity_norm) norms.push_back(NormKind::infinity);

  JsrReport rep;
  std::vector<detail::WordNode> frontier{{Matrix::Identity(n, n), {}}};
  std::vector<double> pruned_max(norms.size(), 0.0);  // over words pruned at shorter lengths

  for (std::size_t k = 1; k <= opts.max_depth && !frontier.empty(); ++k) {
    if (rep.products + frontier.size() * modes.size() > opts.budget) {
      if (k == 1) throw BudgetError("jsr_bounds: budget exhausted before depth 1");
      break;
    }
    std::vector<detail::WordNode> next;
    std::vector<double> level_max(norms.size(), 0.0);
    std::vector<double> level_pruned(norms.size(), 0.0);
    for (const auto& node : frontier) {
      for (std::size_t i = 0; i < modes.size(); ++i) {
        detail::WordNode child{modes[i] * node.product, node.word};
        child.word.push_back(i);
        ++rep.products;
        const double rho = detail::root(spectral_radius(child.product), k);
        if (rho > rep.lower) {
          rep.lower = rho;
          rep.witness = child.word;
        }
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> vals(norms.size());
        for (std::size_t j = 0; j < norms.size(); ++j) {
          vals[j] = detail::root(matrix_norm(child.product, norms[j]), k);
          level_max[j] = std::max(level_max[j], vals[j]);
          best = std::min(best, vals[j]);
        }
        if (best < opts.prune_slack * rep.lower) {
          ++rep.pruned;
          for (std::size_t j = 0; j < norms.size(); ++j) level_pruned[j] = std::max(level_pruned[j], vals[j]);
        } else {
          next.push_back(std::move(child));
        }
      }
    }
    for (std::size_t j = 0; j < norms.size(); ++j) {
      const double bound = std::max(level_max[j], pruned_max[j]);
      if (bound < rep.upper) {
        rep.upper = bound;
        rep.norm_used = norms[j];
        rep.upper_depth = k;
      }
      pruned_max[j] = std::max(pruned_max[j], level_pruned[j]);
    }
    rep.depth = k;
    rep.lower_by_depth.push_back(rep.lower);
    rep.upper_by_depth.push_back(rep.upper);
    frontier = std::move(next);
  }
  // every word got pruned: the pruned leaves alone form a complete prefix set
  if (frontier.empty()) {
    for (std::size_t j = 0; j < norms.size(); ++j)
      if (pruned_max[j] < rep.upper) {
        rep.upper = pruned_max[j];
        rep.norm_used = norms[j];
        rep.upper_depth = rep.depth + 1;
      }
    if (!rep.upper_by_depth.empty()) rep.upper_by_depth.back() = rep.upper;
  }
  if (rep.lower > rep.upper + 1e-10) throw InvariantViolation("jsr_bounds: lower bracket exceeds upper bracket");
  return rep;
}

/// Same bracket for a Q-learning family; also records rho_row.
inline JsrReport jsr_bounds(const SwitchingFamily& fam, const JsrOptions& opts = {}) {
  JsrReport rep = jsr_bounds(std::span<const Matrix>(fam.modes), opts);
  rep.rho_row = fam.rho_row();
  return rep;
}

/// rho_row = 1 - alpha d_min (1 - gamma); checks it dominates every mode's infinity norm.
inline double row_sum_rate(const SwitchingFamily& fam) {
  const double rate = fam.rho_row();
  for (const auto& m : fam.modes)
    if (infinity_norm(m) > rate + kFamilyTol) throw InvariantViolation("row_sum_rate: a mode exceeds the row-sum rate");
  return rate;
}

/// Exact max_{|w|=k} ||A_w|| for k = 0..depth (entry 0 is the empty product).
struct ProductNormProfile {
  std::vector<double> spectral;
  std::vector<double> infinity;
};

inline ProductNormProfile product_norm_profile(std::span<const Matrix> modes, std::size_t depth,
                                               std::size_t budget = 2'000'000) {
  if (modes.empty()) throw std::invalid_argument("product_norm_profile: empty family");
  const auto n = modes.front().rows();
  ProductNormProfile out{{1.0}, {1.0}};
  std::vector<Matrix> level{Matrix::Identity(n, n)};
  std::size_t used = 0;
  for (std::size_t k = 1; k <= depth; ++k) {
    used += level.size() * modes.size();
    if (used > budget) throw BudgetError("product_norm_profile: budget exhausted at depth " + std::to_string(k));
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
    out.spectral.push_back(s);
    out.infinity.push_back(inf);
    level = std::move(next);
  }
  return out;
}

/// Largest positive excess of ||word||_2 over the extreme-family maximum at the
/// same length, over all words of length <= max_len in the alphabet
/// modes + {mixture}. Zero (up to rounding) whenever the mixture lies in the
/// convex hull of the modes.
inline double convex_hull_jsr_check(std::span<const Matrix> modes, std::span<const Matrix> mixtures,
                                    std::size_t max_len) {
  if (modes.empty()) throw std::invalid_argument("convex_hull_jsr_check: empty family");
  const ProductNormProfile extreme = product_norm_profile(modes, max_len);
  double worst = 0.0;
  for (const auto& mix : mixtures) {
    std::vector<Matrix> alphabet(modes.begin(), modes.end());
    alphabet.push_back(mix);
    std::vector<Matrix> level{Matrix::Identity(mix.rows(), mix.cols())};
    for (std::size_t k = 1; k <= max_len; ++k) {
      std::vector<Matrix> next;
      next.reserve(level.size() * alphabet.size());
      for (const auto& p : level)
        for (const auto& a : alphabet) {
          next.push_back(a * p);
          worst = std::max(worst, spectral_norm(next.back()) - extreme.spectral[k]);
        }
      level = std::move(next);
    }
  }
  return worst;
}

inline nlohmann::json to_json(const JsrReport& r) {
  nlohmann::json j{{"lower", r.lower},
                   {"upper", r.upper},
                   {"depth", r.depth},
                   {"norm_used", to_string(r.norm_used)},
                   {"witness_word", r.witness}};
  if (std::isfinite(r.rho_row)) j["rho_row"] = r.rho_row;
  else j["rho_row"] = nullptr;
  return j;
}

}  // namespace qswitch
