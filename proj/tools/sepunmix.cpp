#include <cstdint>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sepunmix/errors.hpp"
#include "sepunmix/experiments.hpp"

using namespace sepunmix;

int main(int argc, char** argv) {
  CLI::App app{"separable nonlinear least-squares experiments"};
  std::string experiment, config_path, out, scale = "desk";
  std::uint64_t seed = 0;
  app.add_option("experiment", experiment, "Coherence, TailDecay, BasinLS, BasinVP, Stability, ConvergenceRegion, "
                                           "Traces or SelfCheck")
      ->required();
  app.add_option("--config", config_path, "JSON configuration")->required();
  app.add_option("--seed", seed, "master seed")->required();
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--scale", scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  ExperimentConfig cfg;
  try {
    const ExperimentKind kind = parse_experiment(experiment);
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open " + config_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed config: ") + e.what());
    }
    cfg = load_config(j, kind, scale, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  }

  try {
    const ExperimentResult r = run_experiment(cfg);
    const auto dir = write_outputs(r, cfg, out);
    std::cout << dir.string() << "\n";
    if (!r.invariants_ok) {
      std::cerr << "invariant failure, see " << (dir / "manifest.json").string() << "\n";
      return 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
