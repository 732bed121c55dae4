#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sepunmix/coherence.hpp"
#include "sepunmix/psf.hpp"
#include "sepunmix/solvers.hpp"

namespace sepunmix {

using json = nlohmann::json;

enum class ExperimentKind { Coherence, TailDecay, BasinLS, BasinVP, Stability, ConvergenceRegion, Traces, SelfCheck };

std::string to_string(ExperimentKind k);
/// Throws ConfigError on unknown names.
ExperimentKind parse_experiment(const std::string& s);

/// Geometric ladder; when relative, lo and hi multiply a reference radius.
struct LadderSpec {
  double lo = 1.0;
  double hi = 10.0;
  int points = 16;
  bool relative = false;

  std::vector<double> build(double reference = 1.0) const;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::SelfCheck;
  std::string scale = "desk";
  std::uint64_t seed = 0;

  int n_samples = 2000;
  double window = 1.0;
  double delta = 5e-3;
  double x_min = 0.05;
  double x_max = 0.1;
  std::string kernel_family = "gaussian";
  double u = 2.0;
  bool unit_speed = true;

  std::vector<std::pair<int, int>> configs;
  std::vector<double> u_list;
  std::vector<double> snr_db;
  std::optional<double> basin_snr_db;  // noisy basin curves when set
  int realizations = 20;
  int basin_realizations = 10;
  int samples_per_radius = 100;

  LadderSpec delta_ladder{5e-3 / 3.1622776601683795, 5e-3 * 3.1622776601683795, 8, false};
  LadderSpec radii_ls{0.5, 1e7, 16, true};
  LadderSpec radii_vp{1e-5, 5e-2, 16, false};
  LadderSpec radii_convergence{1e-3, 0.95, 24, true};  // relative to the box half-width
  int convergence_trials = 20;
  double init_fraction = 0.5;
  double traces_init_radius = 5e-3;

  SolverOptions solver;
  int gd_max_iters = 200000;

  int coherence_x_resolution = 64;
  double truncation_tol = 1e-12;
  int sigma_min_grid_budget = 4096;
  std::string sigma_source = "coherence";  // or "grid"
  std::string fault_injection;             // SelfCheck only: "flip_derivative_sign"

  KernelSpec kernel_spec(std::optional<double> u_override = std::nullopt) const;
  /// Throws ConfigError.
  void validate() const;
  json to_json() const;
};

/// Scale defaults, then every key present in j overrides them. Unknown keys
/// are rejected with ConfigError.
ExperimentConfig load_config(const json& j, ExperimentKind kind, const std::string& scale, std::uint64_t seed);

/// Gaussian vector rescaled so 10 log10(|signal|^2 / |w|^2) = snr_db exactly.
VectorXd generate_noise(const VectorXd& signal, double snr_db, Rng& rng);

/// Long-format table: one row per (config, abscissa, trial, quantity).
class Dataset {
 public:
  struct Row {
    std::string config;
    std::optional<double> u, delta, snr_db, radius;
    std::optional<long> trial;
    std::string quantity;
    double value = 0.0;
  };

  void add(Row r) { rows_.push_back(std::move(r)); }
  const std::vector<Row>& rows() const { return rows_; }
  /// Values of rows matching config and quantity, in insertion order.
  std::vector<double> values(const std::string& config, const std::string& quantity) const;
  std::vector<const Row*> select(const std::string& config, const std::string& quantity) const;
  void write_csv(std::ostream& os) const;

 private:
  std::vector<Row> rows_;
};

struct ExperimentResult {
  Dataset data;
  json manifest;
  bool invariants_ok = true;  // SelfCheck outcome
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

ExperimentResult run_coherence(const ExperimentConfig& cfg);
ExperimentResult run_tail_decay(const ExperimentConfig& cfg);
ExperimentResult run_basin(const ExperimentConfig& cfg, bool projected);
ExperimentResult run_stability(const ExperimentConfig& cfg);
ExperimentResult run_convergence_region(const ExperimentConfig& cfg);
ExperimentResult run_traces(const ExperimentConfig& cfg);
ExperimentResult self_check(const ExperimentConfig& cfg);

/// Writes <out>/<experiment>/data.csv and manifest.json.
std::filesystem::path write_outputs(const ExperimentResult& r, const ExperimentConfig& cfg,
                                    const std::filesystem::path& out);

json to_json(const SupportDictionary& s);
SupportDictionary support_from_json(const json& j);
json to_json(const CoherenceProfile& p);
json to_json(const SpectralConstants& s);

const char* artifact_version();

}  // namespace sepunmix
