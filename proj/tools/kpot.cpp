// Command-line driver:
//
//   kpot run <config> [--seed N] [--out DIR] [--format json|csv|both]
//   kpot describe <config>
//
// `run` writes one report per experiment plus summary.json and prints the
// summary on stdout. Exit status: 0 when every experiment passes, 1 on an
// experiment failure, 2 for an invalid config, 3 for unparsable JSON, 4 for I/O.

#include <CLI11.hpp>

#include <iostream>

#include "kpot/cli_reporting.hpp"

namespace {

int report_error(const kpot::Error& e) {
  const nlohmann::json j{{"status", "error"}, {"error", kpot::to_string(e.code())}, {"message", e.what()}};
  std::cout << j.dump() << "\n";
  std::cerr << "kpot: " << e.what() << "\n";
  return kpot::exit_code(e.code());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Potential-theory experiments for Kolmogorov operators"};
  app.set_version_flag("--version", kpot::kToolVersion);
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir, format;
  app.add_option("--seed", seed, "Seed for Monte Carlo experiments (overrides quadrature.seed)");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  app.add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv", "both"}));

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiments of a config")->fallthrough();
  run->add_option("config", config_path, "Config file")->required();
  auto* desc = app.add_subcommand("describe", "Print the geometry of a config")->fallthrough();
  desc->add_option("config", config_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    kpot::ExperimentConfig cfg = kpot::parse_config(kpot::read_config_file(config_path), seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!format.empty()) cfg.format = kpot::parse_format(format);

    if (*desc) {
      kpot::describe(std::cout, cfg);
      return 0;
    }
    const auto result = kpot::run_experiments(cfg);
    for (const auto& o : result.outcomes)
      std::cerr << (o.passed ? "PASS " : "FAIL ") << o.name << (o.passed ? "" : ": " + o.reason) << "\n";
    kpot::write_reports(result, cfg.out_dir, cfg.format);
    std::cout << result.summary.dump() << "\n";
    return result.passed ? 0 : 1;
  } catch (const kpot::Error& e) {
    return report_error(e);
  }
}
