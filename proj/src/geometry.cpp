#include "sepunmix/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "sepunmix/errors.hpp"

namespace sepunmix {

namespace {

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

// Positive root of a + b r + c r^2 = 0 for a <= 0, b >= 0, c > 0 written to
// avoid cancellation.
double positive_root(double b, double c, double rhs) {
  if (!(rhs > 0.0)) return 0.0;
  const double disc = b * b + 4.0 * c * rhs;
  if (disc < 0.0) throw InvariantError("negative discriminant");
  return 2.0 * rhs / (b + std::sqrt(disc));
}

}  // namespace

void BasinConstants::validate() const {
  for (double v : {c_r0, c_r1, c_r2, c1, c2, noise_norm})
    if (!finite_nonneg(v)) throw InvariantError("basin constants must be finite and nonnegative");
  if (c2 < 1.0) throw InvariantError("basin constant c2 must be at least 1");
}

BasinConstants basin_constants(const SpectralConstants& sigma, const VectorXd& y_star, double noise_norm) {
  sigma.validate();
  const double ys = y_star.norm();
  if (!(ys > 0.0)) throw DomainError("basin_constants: y* must be nonzero");
  if (!finite_nonneg(noise_norm)) throw DomainError("basin_constants: noise norm must be nonnegative");
  const double s0 = sigma[0], s1 = sigma[1], s2 = sigma[2], s3 = sigma[3];
  const double lead = s2 * ys + s1;
  BasinConstants c;
  c.noise_norm = noise_norm;
  c.c_r0 = s2 * ys + 2.0 * s1;
  c.c_r1 = std::max(lead > 0.0 ? s0 / lead : 0.0, 1.0 / ys);
  c.c_r2 = std::max(lead > 0.0 ? (s3 * ys + 2.0 * s2) / lead : 0.0, 2.0 * s2 / ys);
  c.c1 = 2.0 * s1 * ys + 2.0 * s0 + c.c_r0 * c.c_r1 + noise_norm * c.c_r2;
  c.c2 = 1.0 + c.c_r1 * c.c_r2;
  c.validate();
  return c;
}

double radius_alpha_ls(const BasinConstants& c, double lambda_min, double alpha) {
  if (alpha < 0.0) throw DomainError("radius_alpha_ls: alpha must be nonnegative");
  return positive_root(c.c1, c.c2, lambda_min - alpha);
}

double hessian_perturbation_bound(const BasinConstants& c, double rho) { return c.c1 * rho + c.c2 * rho * rho; }

double residual_hessian_bound(const BasinConstants& c, double rho1, double rho2, double noise_norm) {
  return c.c_r0 * rho1 + (noise_norm + rho1) * rho2;
}

bool WeylGap::certified(double slack) const {
  const double tol = slack * std::max(1.0, operator_gap);
  return eigenvalue_gaps.size() == 0 || eigenvalue_gaps.maxCoeff() <= operator_gap + tol;
}

WeylGap weyl_probe(const MatrixXd& h_a, const MatrixXd& h_b) {
  if (h_a.rows() != h_a.cols() || h_a.rows() != h_b.rows() || h_a.cols() != h_b.cols())
    throw ShapeError("weyl_probe: matrices must be square and of equal size");
  for (const MatrixXd* h : {&h_a, &h_b}) {
    const double scale = std::max(1.0, h->cwiseAbs().maxCoeff());
    if ((*h - h->transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw ShapeError("weyl_probe: matrix is not symmetric");
  }
  WeylGap g;
  g.operator_gap = symmetric_norm(h_a - h_b);
  g.eigenvalue_gaps = (symmetric_eigenvalues(h_a) - symmetric_eigenvalues(h_b)).cwiseAbs();
  return g;
}

CouplingFactor coupling_factor(const ProjectedState& st) {
  const int p = st.lift.n_nonlinear();
  const int d = static_cast<int>(st.lifted.y_hat.size());
  const MatrixXd hxy = st.hessian.full.topRightCorner(p, d);
  const double cross = spectral_norm(hxy);
  const VectorXd s = singular_values(st.jacobian.rightCols(d));
  const double smin = s(s.size() - 1);
  CouplingFactor k;
  k.k_paper = std::pow(1.0 + cross / smin, 2);
  k.k_exact = std::pow(1.0 + cross / (smin * smin), 2);
  return k;
}

CouplingFactor coupling_factor(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  return coupling_factor(projected_state(model, z, x));
}

double lift_constant(const SpectralConstants& sigma, double sigma_min_tilde, double y_star_norm) {
  if (!(sigma_min_tilde > 0.0)) throw DomainError("lift constant: sigma_min_tilde must be positive");
  return (sigma[2] + sigma[1] * sigma[1] / sigma_min_tilde) * y_star_norm + sigma[1];
}

double rho_lift_bound(const SpectralConstants& sigma, double sigma_min_tilde, const VectorXd& y_star,
                      double noise_norm, double dx_norm) {
  const double cvp = lift_constant(sigma, sigma_min_tilde, y_star.norm());
  return cvp * dx_norm + sigma[1] * (1.0 + 1.0 / sigma_min_tilde) * noise_norm;
}

void VpConstants::validate() const {
  if (!(c_vp > 0.0) || !std::isfinite(c_vp)) throw InvariantError("c_vp must be positive");
  if (!(sigma_min_tilde > 0.0)) throw InvariantError("sigma_min_tilde must be positive");
  if (k_exact < 1.0 || k_paper < 1.0) throw InvariantError("coupling factors must be at least 1");
  if (!std::isfinite(c1_vp) || !std::isfinite(c2_vp) || !std::isfinite(lambda_offset))
    throw InvariantError("vp constants must be finite");
}

VpConstants vp_constants(const BasinConstants& c, const SpectralConstants& sigma, double sigma_min_tilde,
                         const VectorXd& y_star, double lambda_min_ls, double lambda_min_vp,
                         const CouplingFactor& k) {
  VpConstants vp;
  vp.sigma_min_tilde = sigma_min_tilde;
  vp.c_vp = lift_constant(sigma, sigma_min_tilde, y_star.norm());
  vp.k_exact = k.k_exact;
  vp.k_paper = k.k_paper;
  vp.lambda_min_ls = lambda_min_ls;
  vp.lambda_min_vp = lambda_min_vp;
  vp.k_vp = lambda_min_ls > 0.0 ? lambda_min_vp / lambda_min_ls : 1.0;
  vp.noise_norm = c.noise_norm;
  const double lift = (1.0 + 1.0 / sigma_min_tilde) * c.noise_norm;
  vp.c1_vp = vp.c_vp * (c.c1 + 2.0 * c.c2) * lift;
  vp.c2_vp = c.c2 * vp.c_vp * vp.c_vp;
  vp.lambda_offset = lambda_min_vp - c.c1 * lift - lift * lift;
  vp.validate();
  return vp;
}

double radius_vp_noiseless(const BasinConstants& c, const VpConstants& vp, double lambda_min) {
  return positive_root(c.c1, c.c2, vp.k_vp * lambda_min) / vp.c_vp;
}

double radius_vp_noisy(const BasinConstants&, const VpConstants& vp) {
  const double k = vp.k_exact;
  return positive_root(k * vp.c1_vp, k * vp.c2_vp, vp.lambda_offset);
}

RadiiComparison radii_comparison(double r_ls, const VpConstants& vp, const BasinConstants& c) {
  // r_ls solves c1 r + c2 r^2 = lambda_min, which pins lambda_min.
  const double lambda_min = c.c1 * r_ls + c.c2 * r_ls * r_ls;
  RadiiComparison out;
  out.lower = std::sqrt(vp.k_vp) * r_ls / vp.c_vp;
  out.upper = vp.k_vp * r_ls / vp.c_vp;
  out.eps_vp = radius_vp_noiseless(c, vp, lambda_min);
  const double slack = 1e-12 * std::max(out.upper, 1e-300);
  out.holds = out.lower <= out.eps_vp + slack && out.eps_vp <= out.upper + slack;
  return out;
}

double stability_bound_ls(const SpectralConstants& sigma, const VectorXd& y_star, const MatrixXd& j_star,
                          const VectorXd& w, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("stability_bound_ls: alpha must be positive");
  return (sigma[2] * y_star.norm() + sigma[1]) * (j_star.transpose() * w).norm() / alpha;
}

double stability_bound_vp(const SpectralConstants& sigma, double sigma_min_tilde, const VectorXd& y_star,
                          const MatrixXd& j_vp_star, const VectorXd& w, double alpha_vp) {
  if (!(alpha_vp > 0.0)) throw DomainError("stability_bound_vp: alpha must be positive");
  if (!(sigma_min_tilde > 0.0)) throw DomainError("stability_bound_vp: sigma_min_tilde must be positive");
  const double ys = y_star.norm();
  const double e = (j_vp_star.transpose() * w).norm() / alpha_vp;
  return (sigma[2] * ys + sigma[1]) * e + sigma[1] / sigma_min_tilde * w.norm() +
         sigma[1] * sigma[1] / sigma_min_tilde * e * ys;
}

}  // namespace sepunmix
