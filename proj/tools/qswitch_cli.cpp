#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qswitch/config.hpp"
#include "qswitch/harness.hpp"

namespace {

using qswitch::json;
using qswitch::OutputFormat;

enum Exit { kOk = 0, kViolation = 1, kConfig = 2, kBudget = 3 };

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Override the master seed");
  sub->add_option("--out", c.out, "Output path (default: stdout)");
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
}

OutputFormat format_of(const Common& c) { return c.format == "json" ? OutputFormat::json : OutputFormat::csv; }

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw qswitch::ConfigError("cannot write '" + path + "'");
  os << text;
}

qswitch::ExperimentConfig load(const std::string& path, const Common& c) {
  json j = qswitch::detail::parse_json_text(qswitch::detail::read_file(path), path);
  if (c.seed && j.is_object()) j["seed"] = *c.seed;
  const std::filesystem::path p(path);
  return qswitch::parse_config(j, p.has_parent_path() ? p.parent_path() : std::filesystem::path("."));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Q-learning switching-system certificates and finite-time bounds"};
  app.require_subcommand(1);

  Common c_repro, c_gen, c_cert, c_sim, c_bound, c_val;
  std::string cfg_cert, cfg_sim, cfg_bound, cfg_val, gen_spec, report_path;
  std::vector<double> deltas;

  auto* repro = app.add_subcommand("reproduce-example", "Two-state example where the direct rate beats the row-sum rate");
  add_common(repro, c_repro);

  auto* gen = app.add_subcommand("generate-mdp", "Random MDP from a generator spec");
  add_common(gen, c_gen);
  gen->add_option("spec", gen_spec, "Generator spec JSON file")->required()->check(CLI::ExistingFile);

  auto* cert = app.add_subcommand("certify", "JSR bracket, JSR-induced Lyapunov constants, quadratic search");
  add_common(cert, c_cert);
  cert->add_option("config", cfg_cert, "Experiment config")->required()->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("simulate", "Monte-Carlo trajectories");
  add_common(sim, c_sim);
  sim->add_option("config", cfg_sim, "Experiment config")->required()->check(CLI::ExistingFile);

  auto* bound = app.add_subcommand("bound", "Bound curves and sample-complexity plans");
  add_common(bound, c_bound);
  bound->add_option("config", cfg_bound, "Experiment config")->required()->check(CLI::ExistingFile);
  bound->add_option("--delta", deltas, "Target accuracies for sample-complexity plans");

  auto* val = app.add_subcommand("validate", "Empirical error curves against bounds");
  add_common(val, c_val);
  val->add_option("config", cfg_val, "Experiment config")->required()->check(CLI::ExistingFile);
  val->add_option("--report", report_path, "Also write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*repro) {
      const auto rep = qswitch::reproduce_example();
      emit(qswitch::render(rep, format_of(c_repro)), c_repro.out);
      return rep.passed ? kOk : kViolation;
    }
    if (*gen) {
      const json j = qswitch::detail::parse_json_text(qswitch::detail::read_file(gen_spec), gen_spec);
      auto spec = qswitch::generator_from_json(j);
      if (c_gen.seed) spec.seed = *c_gen.seed;
      const json out = qswitch::mdp_to_json(qswitch::generate_mdp(spec));
      emit(out.dump(2) + "\n", c_gen.out);
      return kOk;
    }
    if (*cert) {
      const auto cfg = load(cfg_cert, c_cert);
      const auto mdp = cfg.build_mdp();
      const auto bundle = qswitch::certify(mdp, qswitch::sampling_distribution(mdp, cfg), cfg);
      emit(qswitch::render(bundle, format_of(c_cert)), c_cert.out);
      return kOk;
    }
    if (*sim) {
      const auto cfg = load(cfg_sim, c_sim);
      const auto ctx = qswitch::prepare(cfg);
      const auto runs = qswitch::simulate_all(cfg, ctx, false);
      emit(qswitch::render_simulation(ctx, runs, format_of(c_sim)), c_sim.out);
      return kOk;
    }
    if (*bound) {
      const auto cfg = load(cfg_bound, c_bound);
      const auto ctx = qswitch::prepare(cfg);
      const auto b = qswitch::compute_bounds(cfg, ctx, deltas);
      emit(qswitch::render(b, ctx.ks, format_of(c_bound)), c_bound.out);
      return kOk;
    }
    if (*val) {
      const auto cfg = load(cfg_val, c_val);
      const auto rep = qswitch::validate(cfg);
      const std::string out = !c_val.out.empty() ? c_val.out
                              : format_of(c_val) == OutputFormat::csv ? cfg.csv_out.value_or("")
                                                                      : cfg.json_out.value_or("");
      emit(qswitch::render(rep, format_of(c_val)), out);
      std::string report = report_path;
      if (report.empty() && c_val.out.empty() && cfg.json_out && format_of(c_val) == OutputFormat::csv)
        report = *cfg.json_out;
      if (!report.empty()) emit(qswitch::render(rep, OutputFormat::json), report);
      if (!rep.identities_ok) {
        std::cerr << "validate: representation identities failed; bound comparison is not meaningful\n";
        return kViolation;
      }
      if (rep.violation) {
        std::cerr << "validate: empirical curve exceeds a bound by more than " << qswitch::kSlackSe
                  << " standard errors\n";
        return kViolation;
      }
      return kOk;
    }
  } catch (const qswitch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const qswitch::BudgetError& e) {
    std::cerr << "budget error: " << e.what() << "\n";
    return kBudget;
  } catch (const qswitch::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kViolation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
