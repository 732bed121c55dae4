#include "sepunmix/varpro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sepunmix/errors.hpp"

namespace sepunmix {

namespace {

constexpr double kStationarityTol = 1e-8;

struct Solve {
  MatrixXd a;
  Eigen::HouseholderQR<MatrixXd> qr;
  VectorXd y;
};

Solve solve_weights(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  const ModelDims d = model.dims();
  if (z.size() != d.n_samples) throw ShapeError("linear_solve: z has wrong length");
  if (x.size() != d.n_nonlinear) throw ShapeError("linear_solve: x has wrong length");
  Solve s{assemble_dictionary(model, x), {}, {}};
  s.qr.compute(s.a);
  s.y = s.qr.solve(z);
  const double scale = std::max(s.a.norm() * z.norm(), std::numeric_limits<double>::min());
  const double stat = (s.a.transpose() * (z - s.a * s.y)).norm();
  if (stat > kStationarityTol * scale)
    throw InvariantError("linear_solve: normal equations violated (" + std::to_string(stat / scale) + ")");
  return s;
}

LiftedPoint make_lifted(const VectorXd& x, const VectorXd& y) { return LiftedPoint{x, y, Theta{x, y}}; }

}  // namespace

LiftedPoint linear_solve(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  return make_lifted(x, solve_weights(model, z, x).y);
}

double projected_loss(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  const Solve s = solve_weights(model, z, x);
  return 0.5 * (z - s.a * s.y).squaredNorm();
}

ProjectedState projected_state(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  const Solve s = solve_weights(model, z, x);
  const int p = model.dims().n_nonlinear;
  const int d = model.dims().n_linear;

  ProjectedState st;
  st.lifted = make_lifted(x, s.y);
  st.residual = z - s.a * s.y;
  st.jacobian = jacobian(model, st.lifted.theta);
  st.hessian = hessian(model, z, st.lifted.theta);

  // Hyy = A^T A = R^T R, so the y-block is -R^{-1} R^{-T} Hyx.
  const MatrixXd hyx = st.hessian.full.bottomLeftCorner(d, p);
  const auto r = s.qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  MatrixXd yb = r.transpose().solve(hyx);
  yb = r.solve(yb);
  st.lift.matrix.resize(p + d, p);
  st.lift.matrix.topRows(p).setIdentity();
  st.lift.matrix.bottomRows(d) = -yb;

  st.projected_jacobian = st.jacobian * st.lift.matrix;
  st.projected_gradient = -(st.lift.matrix.transpose() * (st.jacobian.transpose() * st.residual));
  const MatrixXd hvp = st.lift.matrix.transpose() * st.hessian.full * st.lift.matrix;
  st.projected_hessian = 0.5 * (hvp + hvp.transpose());
  return st;
}

ProjectedResidual projected_residual(const SeparableModel& model, const VectorXd& z, const VectorXd& x,
                                     bool with_jacobian) {
  const Solve s = solve_weights(model, z, x);
  ProjectedResidual out;
  out.lifted = make_lifted(x, s.y);
  out.residual = z - s.a * s.y;
  if (!with_jacobian) return out;
  const int p = model.dims().n_nonlinear;
  const int d = model.dims().n_linear;
  MatrixXd jx(s.a.rows(), p);
  MatrixXd hyx(d, p);
  for (int i = 0; i < p; ++i) {
    const MatrixXd da = model.partial(x, 1, i);
    jx.col(i) = da * s.y;
    hyx.col(i) = s.a.transpose() * jx.col(i) - da.transpose() * out.residual;
  }
  const auto r = s.qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  MatrixXd yb = r.transpose().solve(hyx);
  yb = r.solve(yb);
  out.projected_jacobian = jx - s.a * yb;
  return out;
}

LiftingDerivative lifting_derivative(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  return projected_state(model, z, x).lift;
}

VectorXd projected_gradient(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  return projected_state(model, z, x).projected_gradient;
}

MatrixXd projected_jacobian(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  return projected_state(model, z, x).projected_jacobian;
}

MatrixXd projected_hessian(const SeparableModel& model, const VectorXd& z, const VectorXd& x) {
  return projected_state(model, z, x).projected_hessian;
}

double sigma_min_tilde(const SeparableModel& model, int grid_resolution) {
  if (grid_resolution < 1) throw DomainError("sigma_min_tilde: resolution must be positive");
  const std::vector<VectorXd> pts = box_grid(model.feasible(), grid_resolution + 1);
  const auto n = static_cast<long>(pts.size());
  std::vector<double> smin(pts.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const VectorXd s = singular_values(model.evaluate(pts[static_cast<std::size_t>(i)]));
    smin[static_cast<std::size_t>(i)] = s(s.size() - 1);
  }
  const double best = *std::min_element(smin.begin(), smin.end());
  if (!(best > 0.0)) throw DegeneracyError("sigma_min_tilde: A(x) loses rank on the feasible box");
  return best;
}

}  // namespace sepunmix
