#pragma once

#include "sepunmix/model.hpp"

namespace sepunmix {

/// x together with y_hat(x) = A(x)^+ z.
struct LiftedPoint {
  VectorXd x;
  VectorXd y_hat;
  Theta theta;
};

/// D theta(x), (p + d) x p: identity on top, d y_hat / dx below.
struct LiftingDerivative {
  MatrixXd matrix;

  int n_nonlinear() const { return static_cast<int>(matrix.cols()); }
  MatrixXd y_block() const { return matrix.bottomRows(matrix.rows() - matrix.cols()); }
};

/// Everything variable projection needs at one x, computed from a single
/// factorization of A(x).
struct ProjectedState {
  LiftedPoint lifted;
  VectorXd residual;   // z - A(x) y_hat
  MatrixXd jacobian;   // model Jacobian at the lifted point, N x (p + d)
  HessianSplit hessian;
  LiftingDerivative lift;
  MatrixXd projected_jacobian;  // N x p
  VectorXd projected_gradient;
  MatrixXd projected_hessian;   // p x p
};

/// Least-squares weights by Householder QR. Throws DegeneracyError when A(x)
/// is rank deficient and InvariantError if the normal equations are not met
/// to 1e-8 relative.
LiftedPoint linear_solve(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

/// 1/2 ||(I - A A^+) z||^2.
double projected_loss(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

LiftingDerivative lifting_derivative(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

VectorXd projected_gradient(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

/// J(theta(x)) D theta(x); J_vp^T r = -projected_gradient.
MatrixXd projected_jacobian(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

/// D theta^T H(theta(x)) D theta, the exact Hessian of the projected loss.
MatrixXd projected_hessian(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

/// Residual and J_vp without the second-order blocks of the Hessian; the
/// cheap path for solvers. The Jacobian is left empty unless requested.
struct ProjectedResidual {
  LiftedPoint lifted;
  VectorXd residual;
  MatrixXd projected_jacobian;
};

ProjectedResidual projected_residual(const SeparableModel& model, const VectorXd& z, const VectorXd& x,
                                     bool with_jacobian);

ProjectedState projected_state(const SeparableModel& model, const VectorXd& z, const VectorXd& x);

/// Smallest singular value of A(x) over the axis-uniform grid with
/// grid_resolution intervals per axis. Throws DegeneracyError if it is not
/// positive.
double sigma_min_tilde(const SeparableModel& model, int grid_resolution);

}  // namespace sepunmix
