#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sepunmix/geometry.hpp"
#include "sepunmix/solvers.hpp"

namespace sepunmix {

enum class RadiusMetric { UnmixingRho, EuclideanX };

std::string to_string(RadiusMetric m);

/// n points geometrically spaced from lo to hi inclusive.
std::vector<double> geometric_ladder(double lo, double hi, int n);

/// Point at unmixing distance exactly r from theta*, the distance split
/// between x and y by a uniform fraction (returned in split). Draws whose x
/// leaves the box are rejected; nullopt after max_rejections.
std::optional<Theta> sample_rho_sphere(const Theta& theta_star, double r, const SpectralConstants& sigma,
                                       const FeasibleBox& box, Rng& rng, int max_rejections = 1000,
                                       double* split = nullptr);

/// x* + r u with u uniform on the sphere, rejected outside the box.
std::optional<VectorXd> sample_x_sphere(const VectorXd& x_star, double r, const FeasibleBox& box, Rng& rng,
                                        int max_rejections = 1000);

struct BasinOptions {
  std::vector<double> radii;  // increasing
  int samples_per_radius = 100;
  RadiusMetric metric = RadiusMetric::UnmixingRho;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double noise_norm = 0.0;        // ||w|| entering c1
  double sigma_min_tilde = 0.0;   // required for EuclideanX
  int max_rejections = 1000;
  bool parallel = true;
};

/// One perturbed parameter. For EuclideanX the Hessians are the projected
/// ones at lifted points and hess_gap is the full-Hessian gap between the
/// lifted points.
struct BasinSample {
  int radius_index = 0;
  int trial = 0;
  double radius = 0.0;
  double split = 0.0;          // fraction of rho spent on x (UnmixingRho)
  double rho = 0.0;            // actual unmixing distance to the reference point
  double lambda_min = 0.0;
  double hess_gap = 0.0;       // ||H(theta) - H(theta_ref)||
  double max_eig_gap = 0.0;    // max_l |lambda_l - lambda_l(ref)| of the probed Hessian
  double envelope = 0.0;       // c1 rho + c2 rho^2 at the bound on rho
  double residual_gap = 0.0;   // ||H_r(theta) - H_r(theta_ref)||
  double residual_bound = 0.0;
  double coupling = 1.0;       // K_exact used by the restricted envelope
  double weyl_estimate = 0.0;  // lambda_ref - ||Delta H|| (joint) or lambda_ref - K ||Delta H|| (projected)
  double analytical = 0.0;
  double rho_bound = 0.0;      // rho itself (joint) or the lift bound (projected)
  bool valid = false;
};

struct BasinReport {
  RadiusMetric metric = RadiusMetric::UnmixingRho;
  double alpha = 0.0;
  double analytical_radius = 0.0;
  double empirical_radius = 0.0;
  double lambda_min_star = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> radii;
  std::vector<BasinSample> samples;  // radius-major, trial-minor
  BasinConstants constants;
  VpConstants vp;                    // filled for EuclideanX

  /// Minimum eigenvalues at radius index j over the valid samples.
  std::vector<double> min_eigs(int j) const;
};

/// Probes lambda_min of the loss Hessian (UnmixingRho) or of the projected
/// Hessian (EuclideanX) on spheres around theta*. Throws CoverageError when
/// no sample at some radius fits inside the box.
BasinReport monte_carlo_basin(const SeparableModel& model, const VectorXd& z, const Theta& theta_star,
                              const SpectralConstants& sigma, const BasinOptions& opts);

/// Largest ladder radius r such that every radius up to r had all samples
/// with lambda_min > alpha; 0 if the first rung already fails.
double empirical_radius(const std::vector<double>& radii, const std::vector<BasinSample>& samples,
                        double alpha = 0.0);

struct ConvergenceOptions {
  std::vector<double> radii;
  int trials = 20;
  RadiusMetric metric = RadiusMetric::EuclideanX;  // EuclideanX: VP solve in x; UnmixingRho: joint solve
  SolverOptions solver;
  double success_tolerance = 0.0;
  std::uint64_t seed = 0;
  int max_rejections = 1000;
  bool parallel = true;
};

struct ConvergenceReport {
  std::vector<double> radii;
  std::vector<double> success_rate;
  std::vector<std::vector<double>> errors;  // per radius, per trial rho-error (inf on failure)
  double radius = 0.0;
};

/// Runs the solver from initializations at each distance; the reported radius
/// is the largest rung with success rate one reached without a failing rung
/// before it.
ConvergenceReport empirical_convergence_radius(std::shared_ptr<const SeparableModel> model, const VectorXd& z,
                                               const Theta& theta_star, const SpectralConstants& sigma,
                                               const ConvergenceOptions& opts);

/// radius,trial,split,rho,lambda_min,hess_gap,max_eig_gap,envelope,...
void write_basin_csv(std::ostream& os, const BasinReport& report);

}  // namespace sepunmix
