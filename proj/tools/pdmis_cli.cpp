// pdmis: benchmark driver for partial deterministic-mixture importance weights.
//
//   pdmis sweep           MSE vs. cost table over P = N, N/2, ..., 1
//   pdmis select-p        choose P on one realization by successive halving
//   pdmis variance-check  paired-replication variance ordering on a 1-D problem

#include <cstdio>
#include <iostream>
#include <string>
#include <deque>
#include <vector>

#include "CLI11.hpp"
#include "pdmis/errors.hpp"
#include "pdmis/harness.hpp"

namespace {

struct FlagSet {
  std::deque<std::pair<std::string, std::string>> values;  // name -> storage (stable addresses)
  std::vector<CLI::Option*> options;
  bool quick = false;
  CLI::Option* quick_opt = nullptr;
  std::string config_path;
};

void add_common(CLI::App* cmd, FlagSet& fs) {
  static const char* const kNames[][2] = {
      {"n-proposals", "Number of proposals N"},
      {"sigma", "Proposal scale"},
      {"runs", "Independent replications"},
      {"seed", "Master seed"},
      {"p-values", "Comma separated list of P values (default N, N/2, ..., 1)"},
      {"dim", "Problem dimension (must match the target)"},
      {"out", "CSV output path"},
      {"workers", "Replication threads (0 = all cores)"},
      {"fixed-means", "Reuse one draw of proposal means across runs (true/false)"},
  };
  for (const auto& [name, help] : kNames) {
    fs.values.emplace_back(name, std::string{});
    fs.options.push_back(cmd->add_option("--" + std::string(name), fs.values.back().second, help));
  }
  fs.quick_opt = cmd->add_flag("--quick", fs.quick, "CI-scale preset (N = 1024, 200 runs)");
  cmd->add_option("--config", fs.config_path, "key = value configuration file");
}

void add_extra(CLI::App* cmd, FlagSet& fs, const char* name, const char* help) {
  fs.values.emplace_back(name, std::string{});
  fs.options.push_back(cmd->add_option("--" + std::string(name), fs.values.back().second, help));
}

pdmis::ExperimentConfig resolve(const FlagSet& fs) {
  pdmis::Settings flags;
  if (fs.quick_opt->count() > 0) flags.emplace_back("quick", fs.quick ? "true" : "false");
  for (std::size_t k = 0; k < fs.values.size(); ++k) {
    if (fs.options[k]->count() > 0) flags.emplace_back(fs.values[k].first, fs.values[k].second);
  }
  return pdmis::load_config_file(fs.config_path, flags);
}

int cmd_sweep(const FlagSet& fs) {
  const auto cfg = resolve(fs);
  const auto result = pdmis::run_experiment(cfg);
  pdmis::write_csv(result.rows, cfg.output_path);
  if (!cfg.plot_path.empty()) pdmis::write_plot_data(result.rows, cfg.plot_path, cfg.svg_path);

  std::printf("%8s %8s %14s %14s %12s\n", "P", "M", "MSE(E[X])", "MSE(Z)", "evaluations");
  for (const auto& r : result.rows) {
    std::printf("%8zu %8s %14.6g %14.6g %12llu\n", r.p,
                r.m_nominal ? std::to_string(*r.m_nominal).c_str() : "-", r.mse_mean, r.mse_z,
                static_cast<unsigned long long>(r.evals));
  }
  if (result.truth_check) {
    const auto& tc = *result.truth_check;
    std::printf("full-DM average: E[X] = (");
    for (Eigen::Index d = 0; d < tc.mean_estimate.size(); ++d) {
      std::printf("%s%.4f +- %.4f", d ? ", " : "", tc.mean_estimate[d], tc.mean_stderr[d]);
    }
    std::printf("), Z = %.4f +- %.4f; reference values %s\n", tc.z_estimate, tc.z_stderr,
                tc.consistent ? "consistent" : "NOT consistent (beyond 4 standard errors)");
  }
  std::printf("wrote %s\n", cfg.output_path.c_str());
  return 0;
}

int cmd_select(const FlagSet& fs, bool print_partition) {
  const auto cfg = resolve(fs);
  const auto sel = pdmis::run_selection(cfg);
  std::printf("%8s %8s %12s %12s %12s %12s %12s\n", "P", "M", "E[X]_1", "E[X]_2", "Z_hat",
              "change", "new_evals");
  for (const auto& s : sel.trace) {
    const auto& m = s.estimate.moment;
    std::printf("%8zu %8zu %12.6g %12.6g %12.6g %12.4g %12llu\n", s.num_mixtures,
                cfg.n_proposals / s.num_mixtures, m[0], m.size() > 1 ? m[1] : 0.0,
                s.estimate.z_hat, s.change, static_cast<unsigned long long>(s.new_evals));
  }
  std::printf("chosen P = %zu (%s); distinct proposal evaluations = %llu of N^2 = %llu\n",
              sel.partition.num_subsets(), sel.converged ? "converged" : "schedule exhausted",
              static_cast<unsigned long long>(sel.distinct_evals),
              static_cast<unsigned long long>(cfg.n_proposals) * cfg.n_proposals);
  if (print_partition) std::printf("%s\n", pdmis::to_string(sel.partition).c_str());
  return 0;
}

int cmd_variance(const FlagSet& fs) {
  const auto cfg = resolve(fs);
  const auto res = pdmis::run_variance_check(cfg.reps, cfg.seed);
  std::printf("%6s %16s %16s\n", "P", "Var(E[X] est)", "Var(Z est)");
  for (std::size_t k = 0; k < res.p_values.size(); ++k) {
    std::printf("%6zu %16.8g %16.8g\n", res.p_values[k], res.var_mean[k], res.var_z[k]);
  }
  const bool ok = pdmis::variance_ordered(res.var_mean, 0.05) &&
                  pdmis::variance_ordered(res.var_z, 0.05);
  std::printf("variance non-increasing as P decreases (5%% slack): %s\n", ok ? "yes" : "NO");
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial deterministic-mixture multiple importance sampling benchmark"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  FlagSet sweep_flags, select_flags, var_flags;
  auto* sweep = app.add_subcommand("sweep", "MSE vs. proposal evaluations over P");
  add_common(sweep, sweep_flags);
  add_extra(sweep, sweep_flags, "plot", "Two-column plot data output path");
  add_extra(sweep, sweep_flags, "svg", "SVG chart output path (requires --plot)");

  auto* select = app.add_subcommand("select-p", "Choose P by successive halving");
  add_common(select, select_flags);
  add_extra(select, select_flags, "threshold", "Relative change that stops the search");
  bool print_partition = false;
  select->add_flag("--print-partition", print_partition, "Print the chosen partition");

  auto* variance = app.add_subcommand("variance-check", "Empirical variance ordering");
  add_common(variance, var_flags);
  add_extra(variance, var_flags, "reps", "Paired replications");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep) return cmd_sweep(sweep_flags);
    if (*select) return cmd_select(select_flags, print_partition);
    if (*variance) return cmd_variance(var_flags);
  } catch (const pdmis::Error& e) {
    std::cerr << "pdmis: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
