#pragma once

// Experiment configuration: strict JSON schema, MDP sources, random MDP
// generation and the content hash stamped on reports.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "qswitch/bounds.hpp"
#include "qswitch/error.hpp"
#include "qswitch/mdp.hpp"
#include "qswitch/policies.hpp"
#include "qswitch/qlearn.hpp"
#include "qswitch/rng.hpp"

namespace qswitch {

inline constexpr int kConfigVersion = 1;

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get_as<T>(j, key, where) : fallback;
}

inline std::size_t get_count(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  return v.get<std::size_t>();
}

inline std::size_t count_or(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  return j.contains(key) ? get_count(j, key, where) : fallback;
}

inline Vector vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector row = vector_from_json(j[i], where);
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(where + ": ragged rows");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------- MDP generation

struct GeneratorSpec {
  std::size_t n_states = 2;
  std::size_t n_actions = 2;
  double gamma = 0.9;
  double reward_scale = 1.0;
  std::uint64_t seed = 0;
};

inline GeneratorSpec generator_from_json(const json& j) {
  const std::string where = "generate";
  detail::check_keys(j, {"n_states", "n_actions", "gamma", "reward_scale", "seed"}, where);
  GeneratorSpec g;
  g.n_states = detail::get_count(j, "n_states", where);
  g.n_actions = detail::get_count(j, "n_actions", where);
  g.gamma = detail::get_as<double>(j, "gamma", where);
  g.reward_scale = detail::get_or<double>(j, "reward_scale", 1.0, where);
  if (!j.contains("seed")) throw ConfigError(where + ": missing key 'seed'");
  g.seed = detail::get_as<std::uint64_t>(j, "seed", where);
  return g;
}

/// Rows are normalized exponentials, rewards uniform in [-reward_scale, reward_scale].
inline Mdp generate_mdp(const GeneratorSpec& g) {
  if (g.n_states == 0 || g.n_actions == 0) throw ConfigError("generate: dimensions must be positive");
  if (!(g.reward_scale >= 0.0) || !std::isfinite(g.reward_scale))
    throw ConfigError("generate: reward_scale must be finite and nonnegative");
  const CounterRng rng(g.seed);
  const std::size_t ns = g.n_states;
  std::vector<double> p(ns * g.n_actions * ns);
  std::vector<double> r(p.size());
  std::uint64_t counter = 0;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t a = 0; a < g.n_actions; ++a) {
      const std::size_t base = (s * g.n_actions + a) * ns;
      double total = 0.0;
      for (std::size_t j = 0; j < ns; ++j, ++counter) {
        p[base + j] = -std::log(rng.uniform_open0(counter, 0));
        total += p[base + j];
        r[base + j] = g.reward_scale * (2.0 * rng.uniform(counter, 1) - 1.0);
      }
      if (!(total > 0.0)) {
        for (std::size_t j = 0; j < ns; ++j) p[base + j] = 1.0 / static_cast<double>(ns);
        continue;
      }
      for (std::size_t j = 0; j < ns; ++j) p[base + j] /= total;
    }
  try {
    return Mdp(ns, g.n_actions, g.gamma, std::move(p), std::move(r));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generate: ") + e.what());
  }
}

// ---------------------------------------------------------------- hashing

/// Git blob hash of `content`: SHA-1 over "blob <size>\0<content>".
inline std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("git_blob_hash: allocation failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_hash: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------- experiment config

struct SamplerSpec {
  SamplingMode mode = SamplingMode::iid;
  std::optional<Vector> d;         // i.i.d.; empty means uniform
  std::optional<Matrix> behavior;  // Markovian; empty means uniform
  std::size_t initial_coord = 0;
};

struct JsrSpec {
  std::optional<double> eps;  // empty: half the distance from the upper bracket to 1
  std::size_t t = 4;
  std::size_t depth = 8;
  std::size_t budget = 2'000'000;
  bool tail_v0 = false;  // substitute V^t(e_0) + tail bound for C_eps ||e_0||^2
};

struct QuadSpec {
  std::vector<double> beta_grid;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  json mdp;  // resolved MDP in mdp_to_json form
  SamplerSpec sampler;
  double alpha = 0.1;
  std::size_t steps = 1000;
  std::size_t n_runs = 1;
  std::size_t record_every = 1;
  std::optional<QVector> q0;  // empty means zero
  std::optional<JsrSpec> jsr;
  std::optional<QuadSpec> quad;
  std::vector<CurveKind> bounds;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::optional<std::string> csv_out;
  std::optional<std::string> json_out;
  std::string hash;  // git blob hash of the canonical config text

  Mdp build_mdp() const { return mdp_from_json(mdp); }
  QVector initial_q(const Mdp& m) const {
    return q0 ? *q0 : QVector::Zero(static_cast<Eigen::Index>(m.n_sa()));
  }
};

inline std::optional<CurveKind> curve_kind_from_string(std::string_view s) {
  for (CurveKind k : {CurveKind::veps_moment, CurveKind::veps_final, CurveKind::quad_moment, CurveKind::quad_final,
                      CurveKind::markov_moment, CurveKind::markov_final, CurveKind::markov_rowslack})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline json resolve_mdp(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"inline", "file", "generate"}, "mdp");
  if (j.size() != 1) throw ConfigError("mdp: exactly one of 'inline', 'file', 'generate' is required");
  if (j.contains("inline")) return mdp_to_json(mdp_from_json(j.at("inline")));
  if (j.contains("file")) {
    const auto rel = get_as<std::string>(j, "file", "mdp");
    const std::filesystem::path p = base_dir / rel;
    if (!std::filesystem::exists(p)) throw ConfigError("mdp.file: '" + p.string() + "' does not exist");
    return mdp_to_json(mdp_from_json(parse_json_text(read_file(p), "mdp.file")));
  }
  return mdp_to_json(generate_mdp(generator_from_json(j.at("generate"))));
}

inline SamplerSpec parse_sampler(const json& j) {
  const std::string where = "sampler";
  const auto type = get_as<std::string>(j, "type", where);
  SamplerSpec s;
  if (type == "iid") {
    check_keys(j, {"type", "d"}, where);
    s.mode = SamplingMode::iid;
    if (j.contains("d") && !(j.at("d").is_string() && j.at("d").get<std::string>() == "uniform"))
      s.d = vector_from_json(j.at("d"), "sampler.d");
  } else if (type == "markov") {
    check_keys(j, {"type", "behavior", "initial_coord"}, where);
    s.mode = SamplingMode::markov;
    if (j.contains("behavior") && !(j.at("behavior").is_string() && j.at("behavior").get<std::string>() == "uniform"))
      s.behavior = matrix_from_json(j.at("behavior"), "sampler.behavior");
    s.initial_coord = count_or(j, "initial_coord", 0, where);
  } else {
    throw ConfigError("sampler.type must be 'iid' or 'markov'");
  }
  return s;
}

inline JsrSpec parse_jsr(const json& j) {
  const std::string where = "certificate.jsr";
  check_keys(j, {"eps", "t", "depth", "budget", "v0"}, where);
  JsrSpec s;
  if (j.contains("eps")) {
    const json& e = j.at("eps");
    if (e.is_string()) {
      if (e.get<std::string>() != "auto") throw ConfigError(where + ".eps: expected a number or 'auto'");
    } else {
      s.eps = get_as<double>(j, "eps", where);
      if (!(*s.eps > 0.0)) throw ConfigError(where + ".eps must be positive");
    }
  }
  s.t = count_or(j, "t", s.t, where);
  s.depth = count_or(j, "depth", s.depth, where);
  s.budget = count_or(j, "budget", s.budget, where);
  if (s.depth == 0) throw ConfigError(where + ".depth must be at least 1");
  const auto v0 = get_or<std::string>(j, "v0", "constant", where);
  if (v0 == "constant") s.tail_v0 = false;
  else if (v0 == "evaluated") s.tail_v0 = true;
  else throw ConfigError(where + ".v0 must be 'constant' or 'evaluated'");
  return s;
}

inline QuadSpec parse_quad(const json& j) {
  const std::string where = "certificate.quad";
  check_keys(j, {"beta_grid"}, where);
  QuadSpec s;
  const Vector g = vector_from_json(j.at("beta_grid"), where + ".beta_grid");
  if (g.size() == 0) throw ConfigError(where + ".beta_grid must not be empty");
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!(g(i) > 0.0 && g(i) < 1.0)) throw ConfigError(where + ".beta_grid entries must lie in (0,1)");
    s.beta_grid.push_back(g(i));
  }
  return s;
}

}  // namespace detail

/// Validates `j` against the schema. Relative file references resolve against `base_dir`.
inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir = ".") {
  const std::string where = "config";
  detail::check_keys(j,
                     {"version", "mdp", "sampler", "alpha", "steps", "n_runs", "record_every", "q0", "certificate",
                      "bounds", "seed", "workers", "outputs"},
                     where);
  ExperimentConfig c;
  c.version = detail::get_as<int>(j, "version", where);
  if (c.version != kConfigVersion)
    throw ConfigError("config.version " + std::to_string(c.version) + " is not supported");
  if (!j.contains("mdp")) throw ConfigError("config: missing key 'mdp'");
  c.mdp = detail::resolve_mdp(j.at("mdp"), base_dir);
  const Mdp mdp = c.build_mdp();
  if (!j.contains("sampler")) throw ConfigError("config: missing key 'sampler'");
  c.sampler = detail::parse_sampler(j.at("sampler"));
  if (c.sampler.d) {
    if (static_cast<std::size_t>(c.sampler.d->size()) != mdp.n_sa())
      throw ConfigError("sampler.d must have n_states * n_actions entries");
    try {
      detail::check_distribution(*c.sampler.d, mdp.n_sa(), "sampler.d");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.sampler.behavior) {
    if (static_cast<std::size_t>(c.sampler.behavior->rows()) != mdp.n_states() ||
        static_cast<std::size_t>(c.sampler.behavior->cols()) != mdp.n_actions())
      throw ConfigError("sampler.behavior must be n_states x n_actions");
    try {
      StochasticPolicy check(*c.sampler.behavior);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sampler.behavior: ") + e.what());
    }
  }
  if (c.sampler.initial_coord >= mdp.n_sa()) throw ConfigError("sampler.initial_coord out of range");
  c.alpha = detail::get_as<double>(j, "alpha", where);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("config.alpha must lie in (0,1)");
  c.steps = detail::get_count(j, "steps", where);
  c.n_runs = detail::count_or(j, "n_runs", 1, where);
  if (c.n_runs == 0) throw ConfigError("config.n_runs must be positive");
  c.record_every = detail::count_or(j, "record_every", std::max<std::size_t>(1, c.steps / 100), where);
  if (c.record_every == 0) throw ConfigError("config.record_every must be positive");
  if (j.contains("q0") && !(j.at("q0").is_string() && j.at("q0").get<std::string>() == "zero")) {
    c.q0 = detail::vector_from_json(j.at("q0"), "config.q0");
    if (static_cast<std::size_t>(c.q0->size()) != mdp.n_sa())
      throw ConfigError("config.q0 must have n_states * n_actions entries");
  }
  if (j.contains("certificate")) {
    const json& cert = j.at("certificate");
    detail::check_keys(cert, {"jsr", "quad"}, "certificate");
    if (cert.contains("jsr")) c.jsr = detail::parse_jsr(cert.at("jsr"));
    if (cert.contains("quad")) c.quad = detail::parse_quad(cert.at("quad"));
  }
  if (j.contains("bounds")) {
    if (!j.at("bounds").is_array()) throw ConfigError("config.bounds must be an array of names");
    for (const auto& b : j.at("bounds")) {
      if (!b.is_string()) throw ConfigError("config.bounds must be an array of names");
      const auto k = curve_kind_from_string(b.get<std::string>());
      if (!k) throw ConfigError("config.bounds: unknown bound '" + b.get<std::string>() + "'");
      c.bounds.push_back(*k);
    }
  }
  if (!j.contains("seed")) throw ConfigError("config: missing key 'seed'");
  c.seed = detail::get_as<std::uint64_t>(j, "seed", where);
  c.workers = detail::count_or(j, "workers", 1, where);
  if (j.contains("outputs")) {
    const json& o = j.at("outputs");
    detail::check_keys(o, {"csv", "json"}, "outputs");
    if (o.contains("csv")) c.csv_out = detail::get_as<std::string>(o, "csv", "outputs");
    if (o.contains("json")) c.json_out = detail::get_as<std::string>(o, "json", "outputs");
  }
  c.hash = git_blob_hash(j.dump());
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  const json j = detail::parse_json_text(detail::read_file(path), path.string());
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace qswitch
