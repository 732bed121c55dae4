#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "sepunmix/linalg.hpp"

namespace sepunmix {

/// Problem sizes: N samples, p nonlinear parameters, d linear weights.
struct ModelDims {
  int n_samples = 0;
  int n_nonlinear = 0;
  int n_linear = 0;

  int n_params() const { return n_nonlinear + n_linear; }
  /// Throws ConfigError unless all sizes are positive and N >= d.
  void validate() const;
};

/// Joint parameter theta = (x, y).
struct Theta {
  VectorXd x;
  VectorXd y;

  VectorXd stacked() const;
  static Theta from_stacked(const VectorXd& v, int p);
};

/// Axis-aligned feasible set for the nonlinear parameters.
class FeasibleBox {
 public:
  FeasibleBox() = default;
  FeasibleBox(VectorXd lower, VectorXd upper);
  static FeasibleBox cube(int p, double lo, double hi);

  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  int dim() const { return static_cast<int>(lower_.size()); }
  bool contains(const VectorXd& x) const;
  VectorXd center() const { return 0.5 * (lower_ + upper_); }
  VectorXd clip(const VectorXd& x) const;

 private:
  VectorXd lower_;
  VectorXd upper_;
};

/// Forward map x -> A(x) with derivatives up to third order.
///
/// Implementations must be immutable after construction: every member is a
/// pure function of its arguments and may be called from several threads.
class SeparableModel {
 public:
  virtual ~SeparableModel() = default;

  virtual ModelDims dims() const = 0;
  virtual const FeasibleBox& feasible() const = 0;

  /// A(x), N x d. No domain or rank checks; see assemble_dictionary().
  virtual MatrixXd evaluate(const VectorXd& x) const = 0;
  /// k-th partial derivative of A with respect to x_i, k in {1, 2, 3}.
  virtual MatrixXd partial(const VectorXd& x, int order, int i) const = 0;
  /// Second mixed partial d^2 A / dx_i dx_j.
  virtual MatrixXd mixed_partial(const VectorXd& x, int i, int j) const = 0;

  /// D^k A(x)[u, ..., u] for k in {0, 1, 2, 3}.
  ///
  /// The default is exact for k <= 2 and uses a central difference of the
  /// k = 2 derivative along u for k = 3.
  virtual MatrixXd directional(const VectorXd& x, const VectorXd& u, int order) const;
};

enum class Provenance { GridEstimate, CoherenceBound };

std::string to_string(Provenance p);

/// Global spectral constants sigma_0..sigma_3, the suprema over the box of
/// the operator norms of D^k A.
struct SpectralConstants {
  std::array<double, 4> sigma{};
  Provenance provenance = Provenance::GridEstimate;

  double operator[](int k) const { return sigma[static_cast<std::size_t>(k)]; }
  /// Throws InvariantError on negative or non-finite entries.
  void validate() const;
};

/// Loss Hessian split into the Gauss-Newton term J^T J and the residual term.
struct HessianSplit {
  MatrixXd full;
  MatrixXd curvature;
  MatrixXd residual_part;
};

/// Throws DomainError if x is not inside the model's feasible box.
void require_in_box(const SeparableModel& model, const VectorXd& x);

/// A(x) with domain and rank checks (rank deficient when
/// s_min < 1e-10 * s_max).
MatrixXd assemble_dictionary(const SeparableModel& model, const VectorXd& x);

/// r(theta) = z - A(x) y.
VectorXd residual(const SeparableModel& model, const VectorXd& z, const Theta& theta);

/// 1/2 ||r(theta)||^2.
double loss(const SeparableModel& model, const VectorXd& z, const Theta& theta);

/// Jacobian of theta -> A(x) y, N x (p + d): columns [dA/dx_i y | A(x)].
///
/// This is the model Jacobian; the residual Jacobian is its negation and the
/// loss gradient is -J^T r.
MatrixXd jacobian(const SeparableModel& model, const Theta& theta);

/// Gradient of the loss, -J^T r.
VectorXd gradient(const SeparableModel& model, const VectorXd& z, const Theta& theta);

HessianSplit hessian(const SeparableModel& model, const VectorXd& z, const Theta& theta);

/// rho(a, b) = (s2 |y*| + s1) |x_a - x_b| + s1 |y_a - y_b|.
double unmixing_metric(const SpectralConstants& sigma, const VectorXd& y_star, const Theta& a,
                       const Theta& b);

/// (rho_1, rho_2) used in the residual-Hessian perturbation bound.
std::pair<double, double> auxiliary_metrics(const SpectralConstants& sigma, const VectorXd& y_star,
                                            const Theta& a, const Theta& b);

/// Plug-in estimate of sigma_0..sigma_3 for an arbitrary model.
///
/// sigma_0 is the largest ||A(x)|| over an axis-uniform grid with
/// grid_per_axis points per axis. For k >= 1 the k-linear operator norm is
/// approached from below: the coordinate directions plus
/// directions_per_point random unit directions are scored by
/// ||D^k A(x)[u,...,u]||, and the best one is refined by a short random local
/// ascent. For symmetric multilinear maps on a Hilbert space the norm is
/// attained on the diagonal, so the estimate converges to the true supremum
/// from below. It is a lower estimate; guarantees that need a true upper
/// bound must use CoherenceBound constants.
SpectralConstants estimate_spectral_constants(const SeparableModel& model, int grid_per_axis,
                                              int directions_per_point, std::uint64_t rng_seed);

/// All points of the axis-uniform grid on a box, points_per_axis per axis,
/// enumerated with the first coordinate varying fastest.
std::vector<VectorXd> box_grid(const FeasibleBox& box, int points_per_axis);

}  // namespace sepunmix
