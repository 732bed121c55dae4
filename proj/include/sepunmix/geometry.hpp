#pragma once

#include "sepunmix/model.hpp"
#include "sepunmix/varpro.hpp"

namespace sepunmix {

/// Constants of the Hessian perturbation envelope c1 rho + c2 rho^2.
struct BasinConstants {
  double c_r0 = 0.0;
  double c_r1 = 0.0;
  double c_r2 = 0.0;
  double c1 = 0.0;
  double c2 = 1.0;
  double noise_norm = 0.0;

  void validate() const;
};

BasinConstants basin_constants(const SpectralConstants& sigma, const VectorXd& y_star, double noise_norm);

/// Positive root of c1 r + c2 r^2 = lambda_min - alpha; 0 when lambda_min <= alpha.
double radius_alpha_ls(const BasinConstants& c, double lambda_min, double alpha);

/// c1 rho + c2 rho^2.
double hessian_perturbation_bound(const BasinConstants& c, double rho);

/// c_r0 rho1 + (||w|| + rho1) rho2.
double residual_hessian_bound(const BasinConstants& c, double rho1, double rho2, double noise_norm);

struct WeylGap {
  double operator_gap = 0.0;
  VectorXd eigenvalue_gaps;  // |lambda_l(H_a) - lambda_l(H_b)|, both spectra ascending

  bool certified(double slack = 1e-12) const;
};

/// Throws ShapeError on size mismatch or asymmetry above 1e-9 relative.
WeylGap weyl_probe(const MatrixXd& h_a, const MatrixXd& h_b);

struct CouplingFactor {
  double k_exact = 1.0;  // (1 + ||H_xy|| ||(A^T A)^{-1}||)^2
  double k_paper = 1.0;  // (1 + ||H_xy|| / s_min(A))^2
};

CouplingFactor coupling_factor(const SeparableModel& model, const VectorXd& z, const VectorXd& x);
CouplingFactor coupling_factor(const ProjectedState& state);

/// c_vp = (s2 + s1^2 / s~) ||y*|| + s1.
double lift_constant(const SpectralConstants& sigma, double sigma_min_tilde, double y_star_norm);

/// c_vp ||dx|| + s1 (1 + 1/s~) ||w||. Throws DomainError for s~ <= 0.
double rho_lift_bound(const SpectralConstants& sigma, double sigma_min_tilde, const VectorXd& y_star,
                      double noise_norm, double dx_norm);

struct VpConstants {
  double c_vp = 0.0;
  double k_exact = 1.0;
  double k_paper = 1.0;
  double k_vp = 1.0;
  double sigma_min_tilde = 0.0;
  double c1_vp = 0.0;
  double c2_vp = 0.0;
  double lambda_offset = 0.0;
  double lambda_min_ls = 0.0;  // lambda_min H(theta*)
  double lambda_min_vp = 0.0;  // lambda_min H_vp(x*)
  double noise_norm = 0.0;

  void validate() const;
};

/// Assembles VpConstants from numerically computed lambda_min of H(theta*)
/// and H_vp(x*); c1 and c2 come from the noisy basin constants.
VpConstants vp_constants(const BasinConstants& c, const SpectralConstants& sigma, double sigma_min_tilde,
                         const VectorXd& y_star, double lambda_min_ls, double lambda_min_vp,
                         const CouplingFactor& k);

/// (sqrt(c1^2 + 4 c2 k_vp lambda_min) - c1) / (2 c2 c_vp).
double radius_vp_noiseless(const BasinConstants& c, const VpConstants& vp, double lambda_min);

/// Positive root of lambda - K c1_vp e - K c2_vp e^2 with K = k_exact; 0 when
/// the offset is not positive.
double radius_vp_noisy(const BasinConstants& c, const VpConstants& vp);

struct RadiiComparison {
  double lower = 0.0;
  double upper = 0.0;
  double eps_vp = 0.0;
  bool holds = false;
};

/// lower = sqrt(k_vp) r_ls / c_vp, upper = k_vp r_ls / c_vp, checked against
/// radius_vp_noiseless with 1e-12 relative slack.
RadiiComparison radii_comparison(double r_ls, const VpConstants& vp, const BasinConstants& c);

/// (s2 ||y*|| + s1) ||J^T w|| / alpha.
double stability_bound_ls(const SpectralConstants& sigma, const VectorXd& y_star, const MatrixXd& j_star,
                          const VectorXd& w, double alpha);

/// (s2 ||y*|| + s1) e + (s1 / s~) ||w|| + (s1^2 / s~) e ||y*||, with
/// e = ||J_vp^T w|| / alpha_vp.
double stability_bound_vp(const SpectralConstants& sigma, double sigma_min_tilde, const VectorXd& y_star,
                          const MatrixXd& j_vp_star, const VectorXd& w, double alpha_vp);

}  // namespace sepunmix
