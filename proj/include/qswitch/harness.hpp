#pragma once

// Experiment orchestration: example reproduction, certification, Monte-Carlo
// simulation and bound validation. Every command returns its output as
// strings so the CLI only decides where to write them.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "qswitch/bounds.hpp"
#include "qswitch/config.hpp"
#include "qswitch/error.hpp"
#include "qswitch/jsr.hpp"
#include "qswitch/lyapunov.hpp"
#include "qswitch/mdp.hpp"
#include "qswitch/policies.hpp"
#include "qswitch/qlearn.hpp"
#include "qswitch/switch_family.hpp"

namespace qswitch {

enum class OutputFormat { csv, json };

/// Shortest round-trip decimal form.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- accumulation

/// Mean and variance with Chan's parallel merge.
struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const Welford& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.n) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double se() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

/// Runs fn(i) for i in [0, count) on `workers` threads. The first exception
/// by index is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- example reproduction

struct ExampleReport {
  Matrix m;
  double rho = 0.0;
  double rho_row = 0.0;
  double trace = 0.0;
  double det = 0.0;
  JsrReport bracket;
  bool passed = false;
};

/// Two states, one action, gamma = 0.9, alpha = 0.9, D = diag(0.1, 0.9), uniform P.
inline Mdp example_mdp() {
  return Mdp(2, 1, 0.9, {0.5, 0.5, 0.5, 0.5}, {0.0, 0.0, 0.0, 0.0});
}

inline Vector example_distribution() { return (Vector(2) << 0.1, 0.9).finished(); }

inline constexpr double kExampleAlpha = 0.9;

inline ExampleReport reproduce_example() {
  const Mdp mdp = example_mdp();
  const SwitchingFamily fam = build_family(mdp, example_distribution(), kExampleAlpha);
  ExampleReport rep;
  rep.m = fam.modes.front();
  rep.rho = spectral_radius(rep.m);
  rep.rho_row = row_sum_rate(fam);
  rep.trace = rep.m.trace();
  rep.det = rep.m.determinant();
  rep.bracket = jsr_bounds(fam);
  const Matrix expected = (Matrix(2, 2) << 0.9505, 0.0405, 0.3645, 0.5545).finished();
  const bool entries = (rep.m - expected).cwiseAbs().maxCoeff() <= 1e-12;
  const bool rho_ok = std::abs(rep.rho - 0.9848) <= 5e-4;
  const bool row_ok = std::abs(rep.rho_row - 0.991) <= 1e-12;
  const bool gap = rep.rho < rep.rho_row && rep.bracket.upper < rep.rho_row;
  rep.passed = entries && rho_ok && row_ok && gap;
  return rep;
}

inline std::string render(const ExampleReport& r, OutputFormat f) {
  if (f == OutputFormat::json) {
    json j{{"M", {{r.m(0, 0), r.m(0, 1)}, {r.m(1, 0), r.m(1, 1)}}},
           {"rho", r.rho},
           {"rho_row", r.rho_row},
           {"trace", r.trace},
           {"det", r.det},
           {"jsr", to_json(r.bracket)},
           {"status", r.passed ? "PASS" : "FAIL"}};
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "quantity,value\n";
  os << "M00," << fmt(r.m(0, 0)) << "\nM01," << fmt(r.m(0, 1)) << "\nM10," << fmt(r.m(1, 0)) << "\nM11,"
     << fmt(r.m(1, 1)) << "\n";
  os << "rho," << fmt(r.rho) << "\nrho_row," << fmt(r.rho_row) << "\ntrace," << fmt(r.trace) << "\ndet,"
     << fmt(r.det) << "\njsr_upper," << fmt(r.bracket.upper) << "\nstatus," << (r.passed ? "PASS" : "FAIL") << "\n";
  return os.str();
}

// ---------------------------------------------------------------- certification

struct CertificateBundle {
  SwitchingFamily family;
  double rho_row = 0.0;
  std::optional<JsrReport> jsr;
  std::optional<JsrLyapunov> veps;
  std::optional<QuadSearchResult> quad;
};

/// Sampling distribution of the configured sampler (stationary law for Markovian runs).
inline Vector sampling_distribution(const Mdp& mdp, const ExperimentConfig& cfg) {
  const Dims dims = dims_of(mdp);
  if (cfg.sampler.mode == SamplingMode::iid)
    return cfg.sampler.d ? *cfg.sampler.d
                         : Vector::Constant(static_cast<Eigen::Index>(mdp.n_sa()), 1.0 / static_cast<double>(mdp.n_sa()));
  const StochasticPolicy b = cfg.sampler.behavior ? StochasticPolicy(*cfg.sampler.behavior) : StochasticPolicy::uniform(dims);
  try {
    return stationary_distribution(behavior_kernel(mdp, b));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sampler.behavior: ") + e.what());
  }
}

inline CertificateBundle certify(const Mdp& mdp, const Vector& d, const ExperimentConfig& cfg) {
  CertificateBundle out;
  out.family = build_family(mdp, d, cfg.alpha);
  out.rho_row = row_sum_rate(out.family);
  if (cfg.jsr) {
    JsrOptions jo;
    jo.max_depth = cfg.jsr->depth;
    jo.budget = cfg.jsr->budget;
    out.jsr = jsr_bounds(out.family, jo);
    const double eps = cfg.jsr->eps.value_or(0.5 * (1.0 - out.jsr->upper));
    if (!(out.jsr->upper + eps < 1.0))
      throw ConfigError("certificate.jsr.eps: upper bracket " + fmt(out.jsr->upper) + " + eps is not below 1");
    VepsOptions vo;
    vo.product_budget = cfg.jsr->budget;
    out.veps = veps_constants(out.family, *out.jsr, eps, cfg.jsr->t, vo);
  }
  if (cfg.quad) out.quad = quad_search(out.family.modes, cfg.quad->beta_grid);
  return out;
}

inline json to_json(const CertificateBundle& b) {
  json j{{"rho_row", b.rho_row}, {"n_modes", b.family.size()}};
  if (b.jsr) j["jsr"] = to_json(*b.jsr);
  if (b.veps) j["veps"] = to_json(*b.veps, b.jsr ? b.jsr->depth : 0);
  if (b.quad) {
    json q{{"status", b.quad->status()}};
    json attempts = json::array();
    for (const auto& a : b.quad->attempts)
      attempts.push_back({{"beta", a.beta}, {"converged", a.converged}, {"iterations", a.iterations},
                          {"verified", a.verified}});
    q["attempts"] = attempts;
    if (b.quad->certificate) q["certificate"] = to_json(*b.quad->certificate);
    j["quad"] = q;
  }
  return j;
}

inline std::string render(const CertificateBundle& b, OutputFormat f) {
  if (f == OutputFormat::json) return to_json(b).dump(2) + "\n";
  std::ostringstream os;
  os << "quantity,value\n";
  os << "rho_row," << fmt(b.rho_row) << "\n";
  if (b.jsr) {
    os << "jsr_lower," << fmt(b.jsr->lower) << "\njsr_upper," << fmt(b.jsr->upper) << "\njsr_norm,"
       << to_string(b.jsr->norm_used) << "\njsr_depth," << b.jsr->depth << "\n";
    os << "jsr_gap_below_rho_row," << (b.jsr->upper < b.rho_row ? "yes" : "no") << "\n";
  }
  if (b.veps) os << "beta_eps," << fmt(b.veps->beta_eps) << "\nC_eps," << fmt(b.veps->c_eps) << "\n";
  if (b.quad) {
    os << "quad_status," << b.quad->status() << "\n";
    if (b.quad->certificate)
      os << "quad_beta," << fmt(b.quad->certificate->beta) << "\nquad_condition,"
         << fmt(b.quad->certificate->lambda_max / b.quad->certificate->lambda_min) << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- problem constants

inline ProblemConstants problem_constants(const Mdp& mdp, const QVector& q0, const QVector& q_star, double alpha,
                                          double d_min) {
  const NoiseConstants nc = noise_constant(mdp, q0);
  ProblemConstants p;
  p.alpha = alpha;
  p.gamma = mdp.gamma();
  p.w_max = nc.w_max;
  p.b_q = nc.b_q;
  p.d_min = d_min;
  p.n_sa = mdp.n_sa();
  p.q0_inf = q0.size() ? q0.lpNorm<Eigen::Infinity>() : 0.0;
  p.r_max = mdp.r_max();
  p.e0_norm2 = (q0 - q_star).norm();
  return p;
}

inline std::vector<std::size_t> recorded_steps(std::size_t steps, std::size_t every) {
  std::vector<std::size_t> ks;
  for (std::size_t k = 0; k <= steps; k += every) ks.push_back(k);
  if (ks.back() != steps) ks.push_back(steps);
  return ks;
}

// ---------------------------------------------------------------- simulation

struct RunSummary {
  std::vector<double> err_inf;  // at recorded k
  std::vector<double> err_2;
  std::vector<double> veps;  // V^t(e_k) when a JSR certificate is present
  std::vector<double> quad;  // e_k^T H e_k when a quadratic certificate is present
  RepresentationResiduals residuals;
  double hull = 0.0;  // max ||sum_pi c_pi M_pi - M_mu||_max over recorded k
};

struct SimulationContext {
  Mdp mdp;
  Vector d;
  QVector q0;
  QVector q_star;
  CertificateBundle certs;
  std::vector<std::size_t> ks;
};

inline SimulationContext prepare(const ExperimentConfig& cfg) {
  SimulationContext ctx{cfg.build_mdp(), {}, {}, {}, {}, recorded_steps(cfg.steps, cfg.record_every)};
  ctx.d = sampling_distribution(ctx.mdp, cfg);
  ctx.q0 = cfg.initial_q(ctx.mdp);
  ctx.q_star = solve_q_star(ctx.mdp);
  ctx.certs = certify(ctx.mdp, ctx.d, cfg);
  return ctx;
}

inline RunSummary simulate_run(const ExperimentConfig& cfg, const SimulationContext& ctx, std::size_t run,
                               bool verify) {
  const std::uint64_t seed = cfg.seed ^ static_cast<std::uint64_t>(run);
  RecordOptions ro;
  ro.snapshots = true;
  ro.noise = verify;
  ro.q_star = ctx.q_star;
  TrajectoryRecord rec;
  if (cfg.sampler.mode == SamplingMode::iid) {
    rec = run_trajectory(ctx.mdp, IidSampler(ctx.d, seed), cfg.alpha, cfg.steps, ctx.q0, ro);
  } else {
    const Dims dims = dims_of(ctx.mdp);
    StochasticPolicy b = cfg.sampler.behavior ? StochasticPolicy(*cfg.sampler.behavior) : StochasticPolicy::uniform(dims);
    rec = run_trajectory(ctx.mdp, MarkovSampler(ctx.mdp, std::move(b), seed, cfg.sampler.initial_coord), cfg.alpha,
                         cfg.steps, ctx.q0, ro);
  }
  RunSummary out;
  if (verify) out.residuals = verify_direct_representation(ctx.mdp, rec, ctx.q_star);
  const Dims dims = dims_of(ctx.mdp);
  for (std::size_t k : ctx.ks) {
    const Vector e = rec.q[k] - ctx.q_star;
    out.err_inf.push_back(rec.err_inf[k]);
    out.err_2.push_back(rec.err_2[k]);
    if (ctx.certs.veps) out.veps.push_back(veps_eval(*ctx.certs.veps, e));
    if (ctx.certs.quad && ctx.certs.quad->certificate) out.quad.push_back(e.dot(ctx.certs.quad->certificate->h * e));
    if (verify) {
      const StochasticPolicy mu = linearize_max(rec.q[k], ctx.q_star, dims);
      const Matrix direct = direct_mode(ctx.mdp, ctx.d, cfg.alpha, mu);
      out.hull = std::max(out.hull, (hull_combination(ctx.certs.family, mu) - direct).cwiseAbs().maxCoeff());
    }
  }
  return out;
}

inline std::vector<RunSummary> simulate_all(const ExperimentConfig& cfg, const SimulationContext& ctx, bool verify) {
  std::vector<RunSummary> runs(cfg.n_runs);
  parallel_for(cfg.n_runs, cfg.workers, [&](std::size_t r) { runs[r] = simulate_run(cfg, ctx, r, verify); });
  return runs;
}

inline std::string render_simulation(const SimulationContext& ctx, const std::vector<RunSummary>& runs,
                                     OutputFormat f) {
  const bool has_veps = ctx.certs.veps.has_value();
  const bool has_quad = ctx.certs.quad && ctx.certs.quad->certificate;
  if (f == OutputFormat::json) {
    json arr = json::array();
    for (std::size_t r = 0; r < runs.size(); ++r) {
      json j{{"run", r}, {"k", ctx.ks}, {"err_inf", runs[r].err_inf}, {"err_2", runs[r].err_2}};
      if (has_veps) j["V_eps_t"] = runs[r].veps;
      if (has_quad) j["V_quad"] = runs[r].quad;
      arr.push_back(std::move(j));
    }
    return json{{"runs", arr}}.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "run,k,err_inf,err_2";
  if (has_veps) os << ",V_eps_t";
  if (has_quad) os << ",V_quad";
  os << "\n";
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (std::size_t i = 0; i < ctx.ks.size(); ++i) {
      os << r << ',' << ctx.ks[i] << ',' << fmt(runs[r].err_inf[i]) << ',' << fmt(runs[r].err_2[i]);
      if (has_veps) os << ',' << fmt(runs[r].veps[i]);
      if (has_quad) os << ',' << fmt(runs[r].quad[i]);
      os << "\n";
    }
  return os.str();
}

// ---------------------------------------------------------------- bounds

/// Constants for the JSR bounds; v0 follows the configured substitution mode.
inline VepsCertificateConstants veps_certificate_constants(const JsrLyapunov& lyap, const JsrSpec& spec,
                                                           const Vector& e0) {
  VepsCertificateConstants c{lyap.beta_eps, lyap.c_eps, std::nullopt};
  if (spec.tail_v0) c.v0 = veps_eval(lyap, e0) + veps_tail_bound(lyap, e0, lyap.t);
  return c;
}

inline QuadCertificateConstants quad_certificate_constants(const QuadraticCertificate& q, const Vector& e0) {
  return {q.beta, q.lambda_min, q.lambda_max, e0.dot(q.h * e0)};
}

struct BoundOutput {
  ProblemConstants problem;
  std::vector<BoundCurve> curves;
  std::vector<SampleComplexityPlan> plans;
};

inline std::vector<CurveKind> default_curves(const ExperimentConfig& cfg, const CertificateBundle& certs) {
  std::vector<CurveKind> out;
  const bool markov = cfg.sampler.mode == SamplingMode::markov;
  if (certs.veps) {
    if (markov) out.insert(out.end(), {CurveKind::markov_moment, CurveKind::markov_final, CurveKind::markov_rowslack});
    else out.insert(out.end(), {CurveKind::veps_moment, CurveKind::veps_final});
  }
  if (certs.quad && certs.quad->certificate && !markov) out.insert(out.end(), {CurveKind::quad_moment, CurveKind::quad_final});
  return out;
}

inline BoundOutput compute_bounds(const ExperimentConfig& cfg, const SimulationContext& ctx,
                                  const std::vector<double>& deltas) {
  BoundOutput out;
  out.problem = problem_constants(ctx.mdp, ctx.q0, ctx.q_star, cfg.alpha, ctx.d.minCoeff());
  const Vector e0 = ctx.q0 - ctx.q_star;
  std::optional<VepsCertificateConstants> vc;
  std::optional<QuadCertificateConstants> qc;
  if (ctx.certs.veps) vc = veps_certificate_constants(*ctx.certs.veps, *cfg.jsr, e0);
  if (ctx.certs.quad && ctx.certs.quad->certificate) qc = quad_certificate_constants(*ctx.certs.quad->certificate, e0);
  const auto kinds = cfg.bounds.empty() ? default_curves(cfg, ctx.certs) : cfg.bounds;
  for (CurveKind k : kinds) {
    try {
      out.curves.push_back(make_curve(k, out.problem, vc ? &*vc : nullptr, qc ? &*qc : nullptr, ctx.ks));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("bounds.") + to_string(k) + ": " + e.what());
    }
  }
  for (double delta : deltas) {
    if (vc) {
      const PlanInputs in{vc->beta, vc->c_eps, 1.0, 1.0};
      const bool markov = cfg.sampler.mode == SamplingMode::markov;
      out.plans.push_back(sample_complexity(markov ? PlanKind::markov : PlanKind::veps, delta, out.problem, in));
      if (!markov) out.plans.push_back(sample_complexity(PlanKind::veps_rowgap, delta, out.problem, in));
    }
    if (qc && cfg.sampler.mode == SamplingMode::iid)
      out.plans.push_back(sample_complexity(PlanKind::quad, delta, out.problem, {qc->beta, 1.0, qc->lambda_min, qc->lambda_max}));
  }
  return out;
}

inline std::string render(const BoundOutput& b, const std::vector<std::size_t>& ks, OutputFormat f) {
  if (f == OutputFormat::json) {
    json curves = json::array();
    for (const auto& c : b.curves) curves.push_back(to_json(c));
    json plans = json::array();
    for (const auto& p : b.plans) plans.push_back(to_json(p));
    return json{{"problem", to_json(b.problem)}, {"curves", curves}, {"plans", plans}}.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "k";
  for (const auto& c : b.curves) os << ',' << to_string(c.kind);
  os << "\n";
  for (std::size_t i = 0; i < ks.size(); ++i) {
    os << ks[i];
    for (const auto& c : b.curves) os << ',' << fmt(c.value[i]);
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- validation

inline constexpr double kSlackSe = 3.0;
inline constexpr double kDirectGate = 1e-9;
inline constexpr double kLinearizationGate = 1e-12;
inline constexpr double kHullGate = 1e-12;

struct ValidationPoint {
  std::string cert_kind;
  std::size_t k = 0;
  double err_mean = 0.0;
  double err_se = 0.0;
  double v_mean = 0.0;
  double v_se = 0.0;
  double bound_final = 0.0;
  double bound_moment = 0.0;
  bool violation_final = false;
  bool violation_moment = false;
};

struct ValidationReport {
  std::string config_hash;
  std::string sampling;
  std::size_t n_runs = 0;
  std::size_t steps = 0;
  double alpha = 0.0;
  ProblemConstants problem;
  json certificates;
  RepresentationResiduals residuals;  // maxima over all runs
  double hull = 0.0;
  bool identities_ok = false;
  bool violation = false;
  std::vector<ValidationPoint> points;
};

inline ValidationReport validate(const ExperimentConfig& cfg) {
  if (!cfg.jsr && !cfg.quad) throw ConfigError("validate: at least one certificate must be configured");
  const bool markov = cfg.sampler.mode == SamplingMode::markov;
  if (markov && !cfg.jsr) throw ConfigError("validate: Markovian sampling needs a jsr certificate");
  const SimulationContext ctx = prepare(cfg);
  ValidationReport rep;
  rep.config_hash = cfg.hash;
  rep.sampling = markov ? "markov" : "iid";
  rep.n_runs = cfg.n_runs;
  rep.steps = cfg.steps;
  rep.alpha = cfg.alpha;
  rep.problem = problem_constants(ctx.mdp, ctx.q0, ctx.q_star, cfg.alpha, ctx.d.minCoeff());
  rep.certificates = to_json(ctx.certs);

  const std::vector<RunSummary> runs = simulate_all(cfg, ctx, true);
  for (const auto& r : runs) {
    rep.residuals.direct = std::max(rep.residuals.direct, r.residuals.direct);
    rep.residuals.averaged = std::max(rep.residuals.averaged, r.residuals.averaged);
    rep.residuals.affine = std::max(rep.residuals.affine, r.residuals.affine);
    rep.residuals.linearization = std::max(rep.residuals.linearization, r.residuals.linearization);
    rep.residuals.steps += r.residuals.steps;
    rep.hull = std::max(rep.hull, r.hull);
  }
  rep.identities_ok = rep.residuals.direct <= kDirectGate && rep.residuals.linearization <= kLinearizationGate &&
                      rep.hull <= kHullGate && (!markov || rep.residuals.averaged <= kDirectGate) &&
                      (markov || rep.residuals.affine <= kDirectGate);

  const Vector e0 = ctx.q0 - ctx.q_star;
  const std::size_t nk = ctx.ks.size();
  auto aggregate = [&](auto pick) {
    std::vector<Welford> acc(nk);
    for (const auto& r : runs)
      for (std::size_t i = 0; i < nk; ++i) acc[i].add(pick(r, i));
    return acc;
  };
  const auto err = aggregate([](const RunSummary& r, std::size_t i) { return r.err_inf[i]; });
  auto add_points = [&](const char* kind, const std::vector<Welford>& v, auto bound_at) {
    for (std::size_t i = 0; i < nk; ++i) {
      ValidationPoint p;
      p.cert_kind = kind;
      p.k = ctx.ks[i];
      p.err_mean = err[i].mean;
      p.err_se = err[i].se();
      p.v_mean = v[i].mean;
      p.v_se = v[i].se();
      const BoundValue b = bound_at(p.k);
      p.bound_final = b.final_explicit;
      p.bound_moment = b.moment;
      p.violation_final = p.err_mean - kSlackSe * p.err_se > p.bound_final;
      p.violation_moment = p.v_mean - kSlackSe * p.v_se > p.bound_moment;
      rep.violation = rep.violation || p.violation_final || p.violation_moment;
      rep.points.push_back(p);
    }
  };
  if (ctx.certs.veps) {
    const auto v = aggregate([](const RunSummary& r, std::size_t i) { return r.veps[i]; });
    const VepsCertificateConstants c = veps_certificate_constants(*ctx.certs.veps, *cfg.jsr, e0);
    add_points("jsr", v, [&](std::size_t k) { return markov ? markov_bound(rep.problem, c, k) : veps_bound(rep.problem, c, k); });
  }
  if (!markov && ctx.certs.quad && ctx.certs.quad->certificate) {
    const auto v = aggregate([](const RunSummary& r, std::size_t i) { return r.quad[i]; });
    const QuadCertificateConstants c = quad_certificate_constants(*ctx.certs.quad->certificate, e0);
    add_points("quad", v, [&](std::size_t k) { return quad_bound(rep.problem, c, k); });
  }
  return rep;
}

inline std::string render_csv(const ValidationReport& r) {
  std::ostringstream os;
  os << "k,emp_err_inf_mean,emp_err_inf_se,emp_veps_mean,emp_veps_se,bound_final,bound_moment,cert_kind\n";
  for (const auto& p : r.points)
    os << p.k << ',' << fmt(p.err_mean) << ',' << fmt(p.err_se) << ',' << fmt(p.v_mean) << ',' << fmt(p.v_se) << ','
       << fmt(p.bound_final) << ',' << fmt(p.bound_moment) << ',' << p.cert_kind << "\n";
  return os.str();
}

inline json to_json(const ValidationReport& r) {
  json pts = json::array();
  for (const auto& p : r.points)
    pts.push_back({{"k", p.k},
                   {"cert_kind", p.cert_kind},
                   {"emp_err_inf_mean", p.err_mean},
                   {"emp_err_inf_se", p.err_se},
                   {"emp_veps_mean", p.v_mean},
                   {"emp_veps_se", p.v_se},
                   {"bound_final", p.bound_final},
                   {"bound_moment", p.bound_moment},
                   {"violation_final", p.violation_final},
                   {"violation_moment", p.violation_moment}});
  return {{"config_hash", r.config_hash},
          {"sampling", r.sampling},
          {"n_runs", r.n_runs},
          {"steps", r.steps},
          {"alpha", r.alpha},
          {"slack_se", kSlackSe},
          {"problem", to_json(r.problem)},
          {"certificates", r.certificates},
          {"identities",
           {{"direct", r.residuals.direct},
            {"averaged", r.residuals.averaged},
            {"affine", r.residuals.affine},
            {"linearization", r.residuals.linearization},
            {"convex_hull", r.hull},
            {"steps_checked", r.residuals.steps},
            {"passed", r.identities_ok}}},
          {"violation", r.violation},
          {"points", pts}};
}

inline std::string render(const ValidationReport& r, OutputFormat f) {
  return f == OutputFormat::json ? to_json(r).dump(2) + "\n" : render_csv(r);
}

}  // namespace qswitch
