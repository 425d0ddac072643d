#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "supgdlr/driver.hpp"

namespace {

using supgdlr::ExperimentConfig;

struct CliOptions {
  ExperimentConfig cfg;
  std::string levels = "3..6";
  std::vector<int> ranks;
  std::string config_path;
  // Option handles plus value setters, keyed by option name, for config files.
  std::map<std::string, std::pair<CLI::Option*, std::function<void(const std::string&)>>> keys;
};

void parse_levels(const std::string& spec, ExperimentConfig& cfg) {
  const auto pos = spec.find("..");
  try {
    if (pos == std::string::npos) {
      cfg.level_min = cfg.level_max = std::stoi(spec);
    } else {
      cfg.level_min = std::stoi(spec.substr(0, pos));
      cfg.level_max = std::stoi(spec.substr(pos + 2));
    }
  } catch (const std::exception&) {
    throw supgdlr::ConfigError("levels: expected 'i' or 'i1..i2', got '" + spec + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw supgdlr::ConfigError("config file: key '" + key + "' expects an integer, got '" +
                               value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw supgdlr::ConfigError("config file: key '" + key + "' expects a number, got '" + value +
                               "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw supgdlr::ConfigError("config file: key '" + key + "' expects a boolean, got '" + value +
                             "'");
}

void add_common(CLI::App* sub, CliOptions& o) {
  auto& cfg = o.cfg;
  auto reg = [&o](const char* name, CLI::Option* opt,
                  std::function<void(const std::string&)> set) {
    o.keys[name] = {opt, std::move(set)};
  };
  reg("degree",
      sub->add_option("--degree", cfg.degree, "polynomial degree (1 or 2)")
          ->check(CLI::IsMember({1, 2})),
      [&cfg](const std::string& v) { cfg.degree = parse_int("degree", v); });
  reg("rank", sub->add_option("--rank", cfg.rank, "approximation rank"),
      [&cfg](const std::string& v) { cfg.rank = parse_int("rank", v); });
  reg("ranks", sub->add_option("--ranks", o.ranks, "rank list for the rank sweep")->delimiter(','),
      [&o](const std::string& v) {
        o.ranks.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) o.ranks.push_back(parse_int("ranks", item));
      });
  reg("levels",
      sub->add_option("--levels", o.levels, "refinement levels, 'i' or 'i1..i2' (h = 2^-i)"),
      [&o](const std::string& v) { o.levels = v; });
  reg("tfinal", sub->add_option("--tfinal", cfg.t_final, "final time"),
      [&cfg](const std::string& v) { cfg.t_final = parse_double("tfinal", v); });
  reg("dt-coeff", sub->add_option("--dt-coeff", cfg.dt_coeff, "time-step coefficient C in dt = C h^p"),
      [&cfg](const std::string& v) { cfg.dt_coeff = parse_double("dt-coeff", v); });
  reg("dt-exp", sub->add_option("--dt-exp", cfg.dt_exp, "time-step exponent p (default 2(k+1)/3)"),
      [&cfg](const std::string& v) { cfg.dt_exp = parse_double("dt-exp", v); });
  reg("delta-safety",
      sub->add_option("--delta-safety", cfg.delta_safety, "safety factor on the delta bound"),
      [&cfg](const std::string& v) { cfg.delta_safety = parse_double("delta-safety", v); });
  reg("nc", sub->add_option("--nc", cfg.n_collocation, "number of collocation points"),
      [&cfg](const std::string& v) { cfg.n_collocation = parse_int("nc", v); });
  reg("ic",
      sub->add_option("--ic", cfg.ic_mode, "initial condition reduction: svd or interp")
          ->check(CLI::IsMember({"svd", "interp"})),
      [&cfg](const std::string& v) { cfg.ic_mode = v; });
  reg("strict-stability",
      sub->add_flag("--strict-stability", cfg.strict_stability,
                    "abort when the energy ledger is violated"),
      [&cfg](const std::string& v) { cfg.strict_stability = parse_bool("strict-stability", v); });
  reg("out", sub->add_option("--out", cfg.out_path, "CSV output path"),
      [&cfg](const std::string& v) { cfg.out_path = v; });
  sub->add_option("--config", o.config_path, "key=value configuration file");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Apply `key=value` lines from a config file. Command-line values win;
/// unknown keys are rejected. Blank lines and '#' comments are skipped.
void apply_config(CliOptions& o) {
  std::ifstream is(o.config_path);
  if (!is) throw supgdlr::ConfigError("config file: cannot open " + o.config_path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string content = trim(line.substr(0, line.find('#')));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      throw supgdlr::ConfigError("config file: expected key=value at line " +
                                 std::to_string(lineno));
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const auto it = o.keys.find(key);
    if (it == o.keys.end())
      throw supgdlr::ConfigError("config file: unknown key '" + key + "' at line " +
                                 std::to_string(lineno));
    if (it->second.first->count() > 0) continue;  // command line takes precedence
    it->second.second(value);
  }
}

void finalize(CliOptions& o) {
  if (!o.config_path.empty()) apply_config(o);
  parse_levels(o.levels, o.cfg);
  if (!o.ranks.empty()) o.cfg.ranks = o.ranks;
  o.cfg.validate();
}

void print_record(const supgdlr::LevelRecord& r) {
  std::printf("h=%-12.6g dt=%-12.6g delta=%-12.6g rank=%-3d err_l2=%-12.6g err_supg=%-12.6g "
              "err=%-12.6g trunc=%-12.6g\n",
              r.h, r.dt, r.delta, r.rank, r.err_l2_final, r.err_supg_accum, r.err_combined,
              r.trunc_err);
}

int do_run(CliOptions& o) {
  finalize(o);
  supgdlr::ManufacturedProblem problem;
  problem.validate_derivatives();
  const auto rec = supgdlr::run_single(o.cfg, o.cfg.level_min, o.cfg.rank, problem);
  print_record(rec);
  std::printf("stability: lhs=%.6g rhs=%.6g  lemma3_max=%.3g prop1_max=%.3g nu_hat_max=%.6g "
              "c_lbi_max=%.6g wall=%.2fs\n",
              rec.stab_lhs, rec.stab_rhs, rec.lemma3_max, rec.prop1_max, rec.nu_hat_max,
              rec.c_lbi_max, rec.wall_time_s);
  if (!o.cfg.out_path.empty()) supgdlr::write_csv(o.cfg.out_path, {rec});
  return 0;
}

int do_converge(CliOptions& o) {
  finalize(o);
  supgdlr::ManufacturedProblem problem;
  problem.validate_derivatives();
  const auto report = supgdlr::convergence_study(o.cfg, problem);
  for (const auto& r : report.records) print_record(r);
  for (const auto& a : report.annotations) std::printf("note: %s\n", a.c_str());
  if (report.fit.meaningful)
    std::printf("fitted rate: %.4f (target %.4f for degree %d)\n", report.fit.slope,
                2.0 * (o.cfg.degree + 1) / 3.0, o.cfg.degree);
  else
    std::printf("fitted rate: not meaningful at these error magnitudes\n");
  return 0;
}

int do_ranks(CliOptions& o) {
  finalize(o);
  supgdlr::ManufacturedProblem problem;
  problem.validate_derivatives();
  const auto report = supgdlr::rank_study(o.cfg, problem);
  for (const auto& r : report.records) print_record(r);
  int level = o.cfg.level_min;
  for (const auto& ref : report.reference)
    std::printf("reference (full tensor) level %d: err_l2=%.6g err_supg=%.6g err=%.6g\n",
                level++, ref.err_l2_final, ref.err_supg_accum, ref.err_combined);
  for (const auto& a : report.annotations) std::printf("note: %s\n", a.c_str());
  return 0;
}

int do_diagnose(CliOptions& o) {
  finalize(o);
  supgdlr::ManufacturedProblem problem;
  problem.validate_derivatives();
  std::printf("derivative cross-validation: ok\n");
  auto s = supgdlr::build_setup(o.cfg, o.cfg.level_min, problem);
  std::printf("h=%.6g dt=%.6g (%d steps) C_I=%.6g\n", s.space->mesh.h, s.grid.dt,
              s.grid.n_steps, s.c_inverse);
  std::printf("delta=%.6g  bounds: reaction=%.6g diffusion=%.6g advection=%.6g timestep=%.6g\n",
              s.params.delta, s.params.bound_reaction, s.params.bound_diffusion,
              s.params.bound_advection, s.params.bound_timestep);
  const auto coefa = supgdlr::validate_coefa(problem.coefficients(), *s.space, s.measure, false);
  std::printf("coefficients: c in [%.6g, %.6g], advection-dominated=%s, ok=%s\n",
              coefa.c_min_observed, coefa.c_sup_observed,
              coefa.advection_dominated ? "yes" : "no", coefa.ok() ? "yes" : "no");

  supgdlr::LowRankField u0 = supgdlr::initial_condition(s, o.cfg, o.cfg.rank, problem);
  supgdlr::Stepper stepper(s.ops, true);
  const auto res = stepper.run(u0, s.grid, o.cfg.strict_stability);
  for (size_t n = 0; n < res.diagnostics.size(); ++n) {
    const auto& d = res.diagnostics[n];
    std::printf("step %3zu: lemma3=%.3e prop1=%.3e nu_hat=%.6g c_lbi=%.6g |U dY|=%.6g "
                "cond(T)=%.3g\n",
                n + 1, d.lemma3_residual, d.prop1_residual, d.nu_hat, d.c_lbi, d.udy_norm,
                d.reorth_t_condition);
  }
  std::printf("stability ledger: lhs=%.9g rhs=%.9g %s\n", res.stability_lhs, res.stability_rhs,
              res.stability_ok ? "(holds)" : "(VIOLATED)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank stabilized FEM solver for random advection-diffusion-reaction"};
  app.require_subcommand(1);

  CliOptions run_o, conv_o, ranks_o, diag_o;
  add_common(app.add_subcommand("run", "single solve at one level"), run_o);
  add_common(app.add_subcommand("converge", "mesh-refinement study with rate fit"), conv_o);
  add_common(app.add_subcommand("ranks", "rank sweep with truncation/reference errors"), ranks_o);
  add_common(app.add_subcommand("diagnose", "per-step diagnostics and setup report"), diag_o);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("run")) return do_run(run_o);
    if (app.got_subcommand("converge")) return do_converge(conv_o);
    if (app.got_subcommand("ranks")) return do_ranks(ranks_o);
    if (app.got_subcommand("diagnose")) return do_diagnose(diag_o);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const supgdlr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const supgdlr::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {  // numerical breakdowns and rank degeneracy
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
