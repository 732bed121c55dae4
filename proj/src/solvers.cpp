#include "sepunmix/solvers.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <vector>

#include "sepunmix/errors.hpp"
#include "sepunmix/varpro.hpp"

namespace sepunmix {

std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::GradientDescent: return "gd";
    case SolverKind::GaussNewton: return "gn";
    case SolverKind::LevenbergMarquardt: return "lm";
  }
  return "?";
}

SolverKind parse_solver_kind(const std::string& s) {
  if (s == "gd" || s == "GradientDescent") return SolverKind::GradientDescent;
  if (s == "gn" || s == "GaussNewton") return SolverKind::GaussNewton;
  if (s == "lm" || s == "LevenbergMarquardt") return SolverKind::LevenbergMarquardt;
  throw ConfigError("unknown solver kind '" + s + "'");
}

std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::GradToleranceMet: return "grad_tolerance_met";
    case SolverStatus::MaxIters: return "max_iters";
    case SolverStatus::Stalled: return "stalled";
  }
  return "?";
}

void SolverOptions::validate() const {
  if (max_iters < 0) throw ConfigError("solver: max_iters must be nonnegative");
  if (grad_tol < 0.0 || grad_rel_tol < 0.0 || (grad_tol == 0.0 && grad_rel_tol == 0.0))
    throw ConfigError("solver: gradient tolerance must be positive");
  if (!(lm_up > 1.0) || !(lm_down > 0.0 && lm_down < 1.0))
    throw ConfigError("solver: need lm_up > 1 > lm_down > 0");
  if (!(armijo > 0.0 && armijo < 1.0) || !(shrink > 0.0 && shrink < 1.0))
    throw ConfigError("solver: armijo constant and shrink factor must lie in (0, 1)");
}

bool Trace::monotone() const {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].loss > rows[i - 1].loss) return false;
  return true;
}

VectorXd projected_gradient_on_box(const VectorXd& g, const VectorXd& v, const FeasibleBox& box) {
  VectorXd out = g;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (v(i) <= box.lower()(i) && g(i) > 0.0) out(i) = 0.0;
    if (v(i) >= box.upper()(i) && g(i) < 0.0) out(i) = 0.0;
  }
  return out;
}

namespace {

struct Point {
  VectorXd v;
  VectorXd r;
  MatrixXd j;
  double loss = 0.0;
  VectorXd g;
};

bool finite(const VectorXd& r) { return r.allFinite(); }

class Runner {
 public:
  Runner(const ResidualObjective& obj, const SolverOptions& o) : obj_(obj), opts_(o) {}

  std::optional<double> trial_loss(const VectorXd& v) const {
    try {
      const VectorXd r = obj_.evaluate(v, false).residual;
      if (!finite(r)) return std::nullopt;
      return 0.5 * r.squaredNorm();
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  Point full(const VectorXd& v) const {
    auto e = obj_.evaluate(v, true);
    Point p{v, std::move(e.residual), std::move(e.jacobian), 0.0, {}};
    p.loss = 0.5 * p.r.squaredNorm();
    p.g = p.j.transpose() * p.r;
    return p;
  }

  double grad_norm(const Point& p) const { return projected_gradient_on_box(p.g, p.v, obj_.box()).norm(); }

  // Variables held at a box face by a gradient pointing outward are frozen
  // for the step; the step is still clipped afterwards.
  std::vector<Eigen::Index> free_vars(const Point& p) const {
    const VectorXd pg = projected_gradient_on_box(p.g, p.v, obj_.box());
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < p.g.size(); ++i)
      if (pg(i) != 0.0 || p.g(i) == 0.0) idx.push_back(i);
    return idx;
  }

  MatrixXd free_columns(const Point& p, const std::vector<Eigen::Index>& idx) const {
    MatrixXd jf(p.j.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) jf.col(static_cast<Eigen::Index>(k)) = p.j.col(idx[k]);
    return jf;
  }

  VectorXd scatter(const VectorXd& step, const std::vector<Eigen::Index>& idx, Eigen::Index n) const {
    VectorXd out = VectorXd::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) out(idx[k]) = step(static_cast<Eigen::Index>(k));
    return out;
  }

  VectorXd lm_step(const Point& p, double lambda) const {
    const auto idx = free_vars(p);
    const MatrixXd jf = free_columns(p, idx);
    const Eigen::Index n = jf.cols();
    MatrixXd aug(jf.rows() + n, n);
    aug.topRows(jf.rows()) = jf;
    aug.bottomRows(n) = std::sqrt(lambda) * MatrixXd::Identity(n, n);
    VectorXd rhs = VectorXd::Zero(aug.rows());
    rhs.head(p.r.size()) = -p.r;
    return scatter(aug.householderQr().solve(rhs), idx, p.j.cols());
  }

  // Gauss-Newton direction on the free variables; nullopt when rank deficient.
  std::optional<VectorXd> gn_step(const Point& p) const {
    const auto idx = free_vars(p);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(free_columns(p, idx));
    qr.setThreshold(1e-12);
    if (qr.rank() < static_cast<Eigen::Index>(idx.size())) return std::nullopt;
    return scatter(qr.solve(-p.r), idx, p.j.cols());
  }

 private:
  const ResidualObjective& obj_;
  const SolverOptions& opts_;
};

}  // namespace

SolveResult solve(const ResidualObjective& objective, const VectorXd& v0, const SolverOptions& opts) {
  opts.validate();
  const FeasibleBox& box = objective.box();
  if (v0.size() != objective.dimension()) throw ShapeError("solve: v0 has wrong length");
  if (!box.contains(v0)) throw DomainError("solve: v0 lies outside the feasible box");

  Runner run(objective, opts);
  Point cur = run.full(v0);
  if (!finite(cur.r) || !cur.j.allFinite()) throw DomainError("solve: non-finite residual at v0");

  SolveResult out;
  const double g0 = run.grad_norm(cur);
  out.grad_tolerance = std::max(opts.grad_tol, opts.grad_rel_tol * g0);
  double lambda = opts.lm_lambda0;
  if (lambda < 0.0) {
    const double mean_diag = cur.j.colwise().squaredNorm().mean();
    lambda = 1e-3 * (mean_diag > 0.0 ? mean_diag : 1.0);
  }
  double gd_step = 1.0;

  auto record = [&](int it, double step_norm, double damping) {
    if (!opts.record_trace) return;
    out.trace.rows.push_back(TraceRow{it, cur.loss, run.grad_norm(cur), step_norm, damping});
    if (opts.record_iterates) out.trace.iterates.push_back(cur.v);
  };
  record(0, 0.0, opts.kind == SolverKind::LevenbergMarquardt ? lambda : 0.0);

  out.status = SolverStatus::MaxIters;
  int it = 0;
  while (true) {
    if (run.grad_norm(cur) <= out.grad_tolerance) {
      out.status = SolverStatus::GradToleranceMet;
      break;
    }
    if (it >= opts.max_iters) break;

    std::optional<VectorXd> next;
    double damping = 0.0;
    if (opts.kind == SolverKind::LevenbergMarquardt) {
      for (int tries = 0; tries < 80 && !next; ++tries) {
        const VectorXd cand = box.clip(cur.v + run.lm_step(cur, lambda));
        const auto l = run.trial_loss(cand);
        if (l && *l < cur.loss) {
          next = cand;
          damping = lambda;
          lambda *= opts.lm_down;
        } else {
          lambda *= opts.lm_up;
        }
      }
    } else if (opts.kind == SolverKind::GaussNewton) {
      const auto gn = run.gn_step(cur);
      const VectorXd dir = gn ? *gn : run.lm_step(cur, lambda);
      double t = 1.0;
      for (int tries = 0; tries < 60 && !next; ++tries, t *= opts.shrink) {
        const VectorXd cand = box.clip(cur.v + t * dir);
        const auto l = run.trial_loss(cand);
        if (l && *l <= cur.loss + opts.armijo * cur.g.dot(cand - cur.v) && *l < cur.loss) {
          next = cand;
          damping = t;
        }
      }
    } else {
      double t = gd_step;
      for (int tries = 0; tries < 200 && !next; ++tries, t *= opts.shrink) {
        const VectorXd cand = box.clip(cur.v - t * cur.g);
        const auto l = run.trial_loss(cand);
        if (l && *l <= cur.loss + opts.armijo * cur.g.dot(cand - cur.v) && *l < cur.loss) {
          next = cand;
          damping = t;
        }
      }
      gd_step = damping / opts.shrink;
    }

    if (!next) {
      out.status = SolverStatus::Stalled;
      out.diagnostics = "no decrease found at iteration " + std::to_string(it);
      break;
    }
    const double step_norm = (*next - cur.v).norm();
    Point cand = run.full(*next);
    if (!finite(cand.r) || !cand.j.allFinite()) {
      out.status = SolverStatus::Stalled;
      out.diagnostics = "non-finite Jacobian at iteration " + std::to_string(it + 1);
      break;
    }
    cur = std::move(cand);
    ++it;
    record(it, step_norm, damping);
    if (step_norm <= 1e-15 * (1.0 + cur.v.norm()) && run.grad_norm(cur) > out.grad_tolerance) {
      out.status = SolverStatus::Stalled;
      out.diagnostics = "step below machine resolution at iteration " + std::to_string(it);
      break;
    }
  }
  out.v = cur.v;
  out.iterations = it;
  out.final_loss = cur.loss;
  out.final_grad_norm = run.grad_norm(cur);
  return out;
}

namespace {

FeasibleBox extend_box(const FeasibleBox& x_box, int d) {
  const int p = x_box.dim();
  VectorXd lo(p + d), hi(p + d);
  lo.head(p) = x_box.lower();
  hi.head(p) = x_box.upper();
  lo.tail(d).setConstant(-std::numeric_limits<double>::infinity());
  hi.tail(d).setConstant(std::numeric_limits<double>::infinity());
  return FeasibleBox(lo, hi);
}

class JointObjective final : public ResidualObjective {
 public:
  JointObjective(std::shared_ptr<const SeparableModel> m, VectorXd z)
      : model_(std::move(m)), z_(std::move(z)), box_(extend_box(model_->feasible(), model_->dims().n_linear)) {
    if (z_.size() != model_->dims().n_samples) throw ShapeError("joint objective: z has wrong length");
  }
  int dimension() const override { return model_->dims().n_params(); }
  const FeasibleBox& box() const override { return box_; }
  Evaluation evaluate(const VectorXd& v, bool with_jacobian) const override {
    const Theta th = Theta::from_stacked(v, model_->dims().n_nonlinear);
    require_in_box(*model_, th.x);
    Evaluation e;
    e.residual = residual(*model_, z_, th);
    if (with_jacobian) e.jacobian = -jacobian(*model_, th);
    return e;
  }

 private:
  std::shared_ptr<const SeparableModel> model_;
  VectorXd z_;
  FeasibleBox box_;
};

class VarproObjective final : public ResidualObjective {
 public:
  VarproObjective(std::shared_ptr<const SeparableModel> m, VectorXd z) : model_(std::move(m)), z_(std::move(z)) {
    if (z_.size() != model_->dims().n_samples) throw ShapeError("varpro objective: z has wrong length");
  }
  int dimension() const override { return model_->dims().n_nonlinear; }
  const FeasibleBox& box() const override { return model_->feasible(); }
  Evaluation evaluate(const VectorXd& v, bool with_jacobian) const override {
    ProjectedResidual pr = projected_residual(*model_, z_, v, with_jacobian);
    Evaluation e;
    e.residual = std::move(pr.residual);
    if (with_jacobian) e.jacobian = -pr.projected_jacobian;
    return e;
  }

 private:
  std::shared_ptr<const SeparableModel> model_;
  VectorXd z_;
};

}  // namespace

std::shared_ptr<const ResidualObjective> joint_objective(std::shared_ptr<const SeparableModel> model, VectorXd z) {
  return std::make_shared<JointObjective>(std::move(model), std::move(z));
}

std::shared_ptr<const ResidualObjective> varpro_objective(std::shared_ptr<const SeparableModel> model, VectorXd z) {
  return std::make_shared<VarproObjective>(std::move(model), std::move(z));
}

bool recovery_success(const Theta& theta_hat, const Theta& theta_star, const SpectralConstants& sigma,
                      double tolerance) {
  if (!theta_hat.x.allFinite() || !theta_hat.y.allFinite()) return false;
  return unmixing_metric(sigma, theta_star.y, theta_hat, theta_star) <= tolerance;
}

void write_trace_csv(std::ostream& os, const Trace& trace) {
  os << "iteration,loss,grad_norm,step_norm,damping\n";
  os << std::setprecision(17);
  for (const TraceRow& r : trace.rows)
    os << r.iteration << ',' << r.loss << ',' << r.grad_norm << ',' << r.step_norm << ',' << r.damping << '\n';
}

}  // namespace sepunmix
