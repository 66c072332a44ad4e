#include <iostream>

#include <CLI11.hpp>

#include "blab/cli.hpp"

int main(int argc, char** argv) {
  using namespace blab;
  CLI::App app{"blab: numerical checks for large weighted Bergman spaces"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  unsigned threads = 0;
  long long seed = -1;
  std::string plot_quantity;
  for (const std::string& name : cli::subcommands()) {
    CLI::App* sub = app.add_subcommand(name, name == "suite" ? "run every check in the config" : "run the " + name + " checks");
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker cap (0 = all cores)");
    sub->add_option("--seed", seed, "seed (overrides config seed)");
    sub->add_option("--plot", plot_quantity, "print the SVG for one quantity to stdout");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();
  try {
    cli::RunConfig cfg = cli::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);
    set_thread_count(threads);
    const cli::RunResult res = cli::execute(cfg, subcommand, &std::cerr);
    const std::string svg = plot_quantity.empty() ? std::string() : cli::plot(res.checks, plot_quantity);
    cli::write_outputs(cfg, res);
    if (!svg.empty()) std::cout << svg;
    if (res.exit_code != 0) {
      std::cerr << "failed:";
      for (const auto& c : res.checks)
        if (!c.pass) std::cerr << " " << c.name;
      std::cerr << "\n";
    }
    return res.exit_code;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
