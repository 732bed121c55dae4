#include <doctest.h>

#include "oracles.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/psf.hpp"
#include "sepunmix/solvers.hpp"
#include "sepunmix/varpro.hpp"

using namespace sepunmix;

namespace {

// r(v) = b - M v
class LinearResidual final : public ResidualObjective {
 public:
  LinearResidual(MatrixXd m, VectorXd b)
      : m_(std::move(m)), b_(std::move(b)),
        box_(VectorXd::Constant(m_.cols(), -INFINITY), VectorXd::Constant(m_.cols(), INFINITY)) {}
  int dimension() const override { return static_cast<int>(m_.cols()); }
  Evaluation evaluate(const VectorXd& v, bool with_jacobian) const override {
    Evaluation e;
    e.residual = b_ - m_ * v;
    if (with_jacobian) e.jacobian = -m_;
    return e;
  }
  const FeasibleBox& box() const override { return box_; }

 private:
  MatrixXd m_;
  VectorXd b_;
  FeasibleBox box_;
};

struct Instance {
  std::shared_ptr<const PsfModel> model;
  Theta star;
  VectorXd z;
};

Instance instance(double u, double noise) {
  Rng rng(3);
  auto kernel = unit_speed_wrap(std::make_shared<const ULaplaceKernel>(u, Interval{0.05, 0.1}));
  auto m = build_psf_model(kernel, sample_support(2, 1, 0.02, 1.0, rng), SamplingGrid::uniform(400, 1.0));
  Theta star{m->feasible().center(), VectorXd::Ones(2)};
  VectorXd z = m->evaluate(star.x) * star.y + noise * VectorXd::Random(400);
  return {m, star, z};
}

}  // namespace

TEST_CASE("gauss-newton solves a linear problem in one step") {
  const MatrixXd m = MatrixXd::Random(12, 3);
  const VectorXd b = VectorXd::Random(12);
  const LinearResidual obj(m, b);
  SolverOptions o;
  o.kind = SolverKind::GaussNewton;
  const auto r = solve(obj, VectorXd::Zero(3), o);
  const VectorXd ls = m.colPivHouseholderQr().solve(b);
  CHECK(oracle::rel_err(r.v, ls) < 1e-10);
  CHECK(r.iterations <= 1);
  CHECK(r.status == SolverStatus::GradToleranceMet);
}

TEST_CASE("starting at the minimiser returns immediately") {
  const MatrixXd m = MatrixXd::Random(12, 3);
  const VectorXd v = VectorXd::Random(3);
  const LinearResidual obj(m, m * v);
  for (auto kind : {SolverKind::GradientDescent, SolverKind::GaussNewton, SolverKind::LevenbergMarquardt}) {
    SolverOptions o;
    o.kind = kind;
    o.grad_tol = 1e-12;
    const auto r = solve(obj, v, o);
    CHECK(r.iterations == 0);
    CHECK(r.status == SolverStatus::GradToleranceMet);
  }
}

TEST_CASE("solver options validation and parsing") {
  SolverOptions o;
  o.lm_up = 0.5;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  CHECK(parse_solver_kind("lm") == SolverKind::LevenbergMarquardt);
  CHECK(parse_solver_kind("gd") == SolverKind::GradientDescent);
  CHECK_THROWS_AS(parse_solver_kind("newton"), ConfigError);
}

TEST_CASE("joint and projected objectives agree at lifted points") {
  const auto in = instance(2.0, 0.1);
  const auto joint = joint_objective(in.model, in.z);
  const auto vp = varpro_objective(in.model, in.z);
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  for (int t = 0; t < 20; ++t) {
    VectorXd x(2);
    for (int i = 0; i < 2; ++i)
      x(i) = in.model->feasible().lower()(i) + u(rng) * (in.model->feasible().upper()(i) - in.model->feasible().lower()(i));
    const auto lp = linear_solve(*in.model, in.z, x);
    CHECK(vp->residual_at(x).squaredNorm() == doctest::Approx(joint->residual_at(lp.theta.stacked()).squaredNorm()).epsilon(1e-12));
    for (const auto* obj : {joint.get(), vp.get()}) {
      const VectorXd v = obj == joint.get() ? VectorXd(lp.theta.stacked()) : x;
      auto f = [&](const VectorXd& w) { return obj->residual_at(w); };
      CHECK(oracle::rel_err(obj->jacobian_at(v), oracle::fd_jacobian(f, v, 1e-7)) < 1e-5);
    }
  }
  const auto clean = instance(2.0, 0.0);
  const auto vp0 = varpro_objective(clean.model, clean.z);
  const auto e = vp0->evaluate(clean.star.x, true);
  CHECK((e.jacobian.transpose() * e.residual).norm() < 1e-10);
}

TEST_CASE("all methods recover an in-basin start monotonically") {
  const auto in = instance(2.0, 0.02);
  const VectorXd x0 = in.star.x + VectorXd::Constant(2, 2e-3);
  for (bool projected : {false, true})
    for (auto kind : {SolverKind::GradientDescent, SolverKind::GaussNewton, SolverKind::LevenbergMarquardt}) {
      CAPTURE(projected);
      CAPTURE(to_string(kind));
      const auto obj = projected ? varpro_objective(in.model, in.z) : joint_objective(in.model, in.z);
      const VectorXd v0 = projected ? x0 : VectorXd(linear_solve(*in.model, in.z, x0).theta.stacked());
      SolverOptions o;
      o.kind = kind;
      o.grad_rel_tol = 1e-6;
      o.max_iters = 50000;
      const auto r = solve(*obj, v0, o);
      CHECK(r.status == SolverStatus::GradToleranceMet);
      CHECK(r.trace.monotone());
      for (std::size_t i = 1; i < r.trace.rows.size(); ++i) CHECK(r.trace.rows[i].loss <= r.trace.rows[i - 1].loss);
      if (kind != SolverKind::GradientDescent) CHECK(r.iterations <= 50);
      const VectorXd x = r.v.head(2);
      CHECK((x - in.star.x).norm() < 1e-3);
    }
}

TEST_CASE("steps stay inside the box") {
  const auto in = instance(2.0, 0.02);
  const auto obj = varpro_objective(in.model, in.z);
  SolverOptions o;
  o.record_iterates = true;
  const VectorXd x0 = in.model->feasible().lower() + VectorXd::Constant(2, 1e-4);
  const auto r = solve(*obj, x0, o);
  for (const auto& v : r.trace.iterates) CHECK(in.model->feasible().contains(v));
  CHECK_THROWS_AS(solve(*obj, in.model->feasible().upper() + VectorXd::Ones(2), o), DomainError);
}

TEST_CASE("projected gradient on the box") {
  const FeasibleBox box = FeasibleBox::cube(2, 0.0, 1.0);
  VectorXd g(2), v(2);
  g << 1.0, -1.0;
  v << 0.0, 0.5;
  // Descent direction -g points out of the face x0 = 0.
  const VectorXd pg = projected_gradient_on_box(g, v, box);
  CHECK(pg(0) == 0.0);
  CHECK(pg(1) == -1.0);
}

TEST_CASE("recovery success") {
  SpectralConstants s;
  s.sigma = {1, 1, 1, 1};
  const Theta a{VectorXd::Zero(1), VectorXd::Ones(1)};
  Theta b = a;
  CHECK(recovery_success(a, a, s, 1e-12));
  b.x(0) = 1e-3;
  CHECK_FALSE(recovery_success(b, a, s, 0.0));
}
