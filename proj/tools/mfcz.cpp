// mfcz: config-driven runner for the inequality checks.
//
//   mfcz run --config cfg.json --out dir
//   mfcz sweep --config cfg.json --param alpha --values 0.25,0.5,0.75 --out dir
//   mfcz describe endpoint-weak | --all

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfcz/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out = "mfcz_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::size_t> cap_cells;
  std::optional<double> cap_seconds;

  mfcz::RunOverrides overrides() const { return {seed, threads, cap_cells, cap_seconds}; }
};

void add_common(CLI::App* app, Common& c)
{
  app->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "override the config seed");
  app->add_option("--threads", c.threads, "worker threads per check")->check(CLI::PositiveNumber);
  app->add_option("--cap-cells", c.cap_cells, "maximum grid cells per check");
  app->add_option("--cap-seconds", c.cap_seconds, "wall-clock budget in seconds (0 = none)");
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Empirical checks for multilinear fractional operators"};
  app.require_subcommand(1);

  Common run_opts;
  CLI::App* run = app.add_subcommand("run", "run every check of a config");
  add_common(run, run_opts);

  Common sweep_opts;
  std::string param;
  std::vector<double> values;
  std::size_t check_index = 0;
  CLI::App* sweep = app.add_subcommand("sweep", "rerun one check over parameter values");
  add_common(sweep, sweep_opts);
  sweep->add_option("--param", param, "alpha, delta, q, lambda, gamma, N or a")->required();
  sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
  sweep->add_option("--check", check_index, "index of the base check in the config")->capture_default_str();

  std::string name;
  bool all = false;
  CLI::App* describe = app.add_subcommand("describe", "print what a check verifies");
  describe->add_option("name", name, "check name");
  describe->add_flag("--all", all, "list every registered check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mfcz::kExitInvalidConfig;
  }

  if (*run) return mfcz::run_command(run_opts.config, run_opts.out, run_opts.overrides(), std::cerr);
  if (*sweep)
    return mfcz::sweep_command(sweep_opts.config, param, values, check_index, sweep_opts.out, sweep_opts.overrides(),
                               std::cerr);
  if (all) {
    for (const auto& c : mfcz::check_registry()) std::cout << mfcz::describe_check(c.name) << "\n";
    return 0;
  }
  if (name.empty()) {
    std::cerr << "describe needs a check name or --all; valid names: " << mfcz::check_names() << "\n";
    return mfcz::kExitInvalidConfig;
  }
  try {
    std::cout << mfcz::describe_check(name);
  } catch (const mfcz::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return mfcz::kExitInvalidConfig;
  }
  return 0;
}
