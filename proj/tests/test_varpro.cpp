#include <doctest.h>

#include "oracles.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/psf.hpp"
#include "sepunmix/simple_models.hpp"
#include "sepunmix/varpro.hpp"

using namespace sepunmix;

namespace {

std::shared_ptr<const PsfModel> psf(int p, int q, std::uint64_t seed, int n = 300) {
  Rng rng(seed);
  auto kernel = std::make_shared<const GaussianKernel>(Interval{0.05, 0.1});
  return build_psf_model(kernel, sample_support(p, q, 0.05, 1.0, rng), SamplingGrid::uniform(n, 1.0));
}

VectorXd random_x(const FeasibleBox& box, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  VectorXd x(box.dim());
  for (int i = 0; i < x.size(); ++i) x(i) = box.lower()(i) + u(rng) * (box.upper()(i) - box.lower()(i));
  return x;
}

}  // namespace

TEST_CASE("linear solve") {
  const auto m = psf(2, 2, 1);
  const VectorXd x = m->feasible().center();
  VectorXd y(4);
  y << 1.0, -0.5, 2.0, 0.25;
  const MatrixXd a = m->evaluate(x);
  CHECK(oracle::rel_err(linear_solve(*m, a * y, x).y_hat, y) < 1e-10);

  const VectorXd z = a * y + 0.2 * VectorXd::Random(300);
  const VectorXd normal = (a.transpose() * a).ldlt().solve(a.transpose() * z);
  CHECK(oracle::rel_err(linear_solve(*m, z, x).y_hat, normal) < 1e-8);

  const MatrixXd q = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(10, 3)).householderQ() * MatrixXd::Identity(10, 3);
  const auto orth = AffineModel::constant(q, FeasibleBox::cube(1, 0, 1));
  const VectorXd zz = VectorXd::Random(10);
  CHECK(oracle::rel_err(linear_solve(orth, zz, VectorXd::Zero(1)).y_hat, q.transpose() * zz) < 1e-12);
  CHECK(sigma_min_tilde(orth, 4) == doctest::Approx(1.0));

  const auto dup = AffineModel::constant(MatrixXd::Ones(5, 2), FeasibleBox::cube(1, 0, 1));
  CHECK_THROWS_AS(linear_solve(dup, VectorXd::Ones(5), VectorXd::Zero(1)), DegeneracyError);
}

TEST_CASE("projected loss") {
  const auto m = psf(2, 1, 2);
  const VectorXd x = m->feasible().center();
  const VectorXd z = m->evaluate(x) * VectorXd::Ones(2);
  CHECK(projected_loss(*m, z, x) < 1e-24);
  const MatrixXd a = m->evaluate(x);
  const VectorXd w = VectorXd::Random(300);
  const VectorXd perp = w - a * (a.transpose() * a).ldlt().solve(a.transpose() * w);
  CHECK(projected_loss(*m, perp, x) == doctest::Approx(0.5 * perp.squaredNorm()).epsilon(1e-10));

  Rng rng(5);
  const VectorXd zn = z + 0.1 * VectorXd::Random(300);
  for (int t = 0; t < 100; ++t) {
    const VectorXd xr = random_x(m->feasible(), rng);
    const auto lp = linear_solve(*m, zn, xr);
    CHECK(projected_loss(*m, zn, xr) == doctest::Approx(loss(*m, zn, lp.theta)).epsilon(1e-12));
  }
}

TEST_CASE("lifting derivative of a scalar model follows the quotient rule") {
  // A(x) = a0 + x a1, y(x) = <A, z> / <A, A>
  VectorXd a0(3), a1(3), z(3);
  a0 << 1.0, 2.0, 0.5;
  a1 << 0.3, -1.0, 2.0;
  z << 0.7, 1.1, -0.4;
  const AffineModel m(a0, {a1}, FeasibleBox::cube(1, -1.0, 1.0));
  const double x = 0.2;
  const VectorXd a = a0 + x * a1;
  const double num = a.dot(z), den = a.dot(a);
  const double dy = (a1.dot(z) * den - num * 2.0 * a1.dot(a)) / (den * den);
  const auto lift = lifting_derivative(m, z, VectorXd::Constant(1, x));
  CHECK(lift.matrix(0, 0) == 1.0);
  CHECK(lift.matrix(1, 0) == doctest::Approx(dy).epsilon(1e-12));

  const auto c = AffineModel::constant(MatrixXd::Random(4, 2), FeasibleBox::cube(1, 0, 1));
  CHECK(lifting_derivative(c, VectorXd::Random(4), VectorXd::Zero(1)).y_block().norm() == 0.0);
  CHECK(projected_jacobian(c, VectorXd::Random(4), VectorXd::Zero(1)).norm() == 0.0);
}

TEST_CASE("projected derivatives match finite differences") {
  for (auto [p, q] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 2}}) {
    const auto m = psf(p, q, 30 + p + q);
    Rng rng(6);
    const VectorXd xs = m->feasible().center();
    const VectorXd z0 = m->evaluate(xs) * VectorXd::Ones(p * q);
    for (const double noise : {0.0, 0.3}) {
      const VectorXd z = z0 + noise * VectorXd::Random(300);
      for (int t = 0; t < 20; ++t) {
        const VectorXd x = random_x(m->feasible(), rng);
        auto yhat = [&](const VectorXd& v) { return VectorXd(linear_solve(*m, z, v).y_hat); };
        const auto lift = lifting_derivative(*m, z, x);
        CHECK(oracle::rel_err(lift.y_block(), oracle::fd_jacobian(yhat, x, 1e-7)) < 1e-5);

        auto fit = [&](const VectorXd& v) { return VectorXd(m->evaluate(v) * linear_solve(*m, z, v).y_hat); };
        CHECK(oracle::rel_err(projected_jacobian(*m, z, x), oracle::fd_jacobian(fit, x, 1e-7)) < 1e-5);

        auto lvp = [&](const VectorXd& v) { return projected_loss(*m, z, v); };
        auto grad = [&](const VectorXd& v) { return VectorXd(projected_gradient(*m, z, v)); };
        const VectorXd g = projected_gradient(*m, z, x);
        CHECK(oracle::rel_err(g.transpose(), oracle::fd_jacobian([&](const VectorXd& v) {
                                return VectorXd::Constant(1, lvp(v));
                              }, x, 1e-7)) < 1e-5);
        CHECK(oracle::rel_err(projected_hessian(*m, z, x), oracle::fd_jacobian(grad, x, 1e-7)) < 1e-4);

        // Stationarity in y: the projected gradient is the x-block of the full gradient.
        const auto lp = linear_solve(*m, z, x);
        CHECK(oracle::rel_err(g, gradient(*m, z, lp.theta).head(p)) < 1e-8);
        const auto st = projected_state(*m, z, x);
        CHECK(oracle::rel_err(VectorXd(-st.projected_jacobian.transpose() * st.residual), g) < 1e-8);
      }
    }
  }
}

TEST_CASE("projected hessian at the noiseless truth") {
  const auto m = psf(2, 1, 7);
  const VectorXd x = m->feasible().center();
  const VectorXd z = m->evaluate(x) * VectorXd::Ones(2);
  CHECK(projected_gradient(*m, z, x).norm() < 1e-10);
  const MatrixXd jvp = projected_jacobian(*m, z, x);
  CHECK(oracle::rel_err(projected_hessian(*m, z, x), jvp.transpose() * jvp) < 1e-9);
}

TEST_CASE("sigma min tilde") {
  const auto m = psf(2, 1, 8, 200);
  const double coarse = sigma_min_tilde(*m, 8);
  const double fine = sigma_min_tilde(*m, 16);
  CHECK(fine <= coarse);
  double scan = INFINITY;
  for (const auto& x : box_grid(m->feasible(), 33)) {
    Eigen::JacobiSVD<MatrixXd> svd(m->evaluate(x));
    scan = std::min(scan, svd.singularValues().minCoeff());
  }
  CHECK(fine == doctest::Approx(scan).epsilon(0.02));
}
