#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sepunmix/model.hpp"

namespace sepunmix {

/// Nonlinear least-squares objective 1/2 ||r(v)||^2 seen by the solvers.
/// Implementations are pure and may be shared between threads.
class ResidualObjective {
 public:
  virtual ~ResidualObjective() = default;

  struct Evaluation {
    VectorXd residual;
    MatrixXd jacobian;  // empty when not requested
  };

  virtual int dimension() const = 0;
  virtual Evaluation evaluate(const VectorXd& v, bool with_jacobian) const = 0;
  /// Box on v, infinite where unconstrained.
  virtual const FeasibleBox& box() const = 0;

  VectorXd residual_at(const VectorXd& v) const { return evaluate(v, false).residual; }
  MatrixXd jacobian_at(const VectorXd& v) const { return evaluate(v, true).jacobian; }
};

enum class SolverKind { GradientDescent, GaussNewton, LevenbergMarquardt };

std::string to_string(SolverKind k);
/// Accepts "gd", "gn", "lm" and the full names; throws ConfigError otherwise.
SolverKind parse_solver_kind(const std::string& s);

struct SolverOptions {
  SolverKind kind = SolverKind::LevenbergMarquardt;
  int max_iters = 10000;
  double grad_tol = 0.0;       // absolute floor
  double grad_rel_tol = 1e-10; // relative to the initial gradient norm
  double lm_lambda0 = -1.0;    // negative: 1e-3 times the mean diagonal of J^T J
  double lm_up = 10.0;
  double lm_down = 0.5;
  double armijo = 1e-4;
  double shrink = 0.5;
  bool record_trace = true;
  bool record_iterates = false;

  /// Throws ConfigError on non-positive tolerances or bad damping factors.
  void validate() const;
};

enum class SolverStatus { GradToleranceMet, MaxIters, Stalled };

std::string to_string(SolverStatus s);

struct TraceRow {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double damping = 0.0;  // LM lambda, GD step length, GN backtracking factor
};

struct Trace {
  std::vector<TraceRow> rows;
  std::vector<VectorXd> iterates;

  /// True when the loss never increases between consecutive rows.
  bool monotone() const;
};

struct SolveResult {
  VectorXd v;
  Trace trace;
  SolverStatus status = SolverStatus::MaxIters;
  int iterations = 0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  double grad_tolerance = 0.0;  // effective threshold
  std::string diagnostics;
};

/// Throws DomainError if v0 is outside the box or the residual there is not finite.
SolveResult solve(const ResidualObjective& objective, const VectorXd& v0, const SolverOptions& opts);

/// Gradient with components that push out of an active box face zeroed.
VectorXd projected_gradient_on_box(const VectorXd& g, const VectorXd& v, const FeasibleBox& box);

/// Joint problem in theta = (x, y); the box constrains x only.
std::shared_ptr<const ResidualObjective> joint_objective(std::shared_ptr<const SeparableModel> model,
                                                         VectorXd z);

/// Projected problem in x; the residual is z - A(x) y_hat(x).
std::shared_ptr<const ResidualObjective> varpro_objective(std::shared_ptr<const SeparableModel> model,
                                                          VectorXd z);

/// rho(theta_hat, theta*) <= tolerance.
bool recovery_success(const Theta& theta_hat, const Theta& theta_star, const SpectralConstants& sigma,
                      double tolerance);

/// iteration,loss,grad_norm,step_norm,damping
void write_trace_csv(std::ostream& os, const Trace& trace);

}  // namespace sepunmix
