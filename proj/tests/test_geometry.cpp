#include <doctest.h>

#include "oracles.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/geometry.hpp"
#include "sepunmix/psf.hpp"
#include "sepunmix/simple_models.hpp"

using namespace sepunmix;

namespace {

SpectralConstants sig(double s0, double s1, double s2, double s3) {
  SpectralConstants s;
  s.sigma = {s0, s1, s2, s3};
  return s;
}

}  // namespace

TEST_CASE("basin constants by substitution") {
  const auto c = basin_constants(sig(1, 1, 0, 0), VectorXd::Ones(1), 0.0);
  CHECK(c.c_r0 == doctest::Approx(2.0));
  CHECK(c.c_r1 == doctest::Approx(1.0));
  CHECK(c.c_r2 == doctest::Approx(0.0));
  CHECK(c.c1 == doctest::Approx(6.0));
  CHECK(c.c2 == doctest::Approx(1.0));

  const auto s = sig(1.3, 0.7, 2.1, 0.4);
  const auto a = basin_constants(s, VectorXd::Constant(2, 0.8), 0.5);
  const auto b = basin_constants(s, VectorXd::Constant(2, 0.8), 1.0);
  CHECK(b.c1 - a.c1 == doctest::Approx(a.c_r2 * 0.5).epsilon(1e-12));
}

TEST_CASE("basin radius arithmetic") {
  BasinConstants c;
  c.c1 = 0.0;
  c.c2 = 1.0;
  CHECK(radius_alpha_ls(c, 4.0, 0.0) == doctest::Approx(2.0));
  CHECK(radius_alpha_ls(c, 1.0, 1.0) == 0.0);
  c.c1 = 1.0;
  CHECK(radius_alpha_ls(c, 3.0, 1.0) == doctest::Approx(1.0));
  c.c1 = 6.0;
  CHECK(hessian_perturbation_bound(c, 0.5) == doctest::Approx(3.25));
  CHECK(hessian_perturbation_bound(c, 0.0) == 0.0);
  c.c_r0 = 2.0;
  CHECK(residual_hessian_bound(c, 0.1, 0.2, 1.0) == doctest::Approx(0.42));
  CHECK(residual_hessian_bound(c, 0.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("weyl probe") {
  const MatrixXd a = VectorXd::LinSpaced(2, 1, 2).asDiagonal();
  MatrixXd b = a;
  b(1, 1) = 5.0;
  const auto g = weyl_probe(a, b);
  CHECK(g.operator_gap == doctest::Approx(3.0));
  CHECK(g.eigenvalue_gaps(0) == doctest::Approx(0.0));
  CHECK(g.eigenvalue_gaps(1) == doctest::Approx(3.0));
  CHECK(weyl_probe(a, a).operator_gap == 0.0);
  Rng rng(1);
  std::normal_distribution<double> n;
  for (int t = 0; t < 1000; ++t) {
    MatrixXd x(5, 5), y(5, 5);
    for (int i = 0; i < 25; ++i) {
      x(i) = n(rng);
      y(i) = n(rng);
    }
    CHECK(weyl_probe(x + x.transpose(), y + y.transpose()).certified());
  }
  CHECK_THROWS_AS(weyl_probe(a, MatrixXd::Identity(3, 3)), ShapeError);
}

TEST_CASE("coupling factor special cases") {
  // A constant model has no cross block.
  const auto c = AffineModel::constant(MatrixXd::Random(6, 2), FeasibleBox::cube(1, 0, 1));
  const auto k = coupling_factor(c, VectorXd::Random(6), VectorXd::Zero(1));
  CHECK(k.k_exact == doctest::Approx(1.0));
  CHECK(k.k_paper == doctest::Approx(1.0));

  // A(x) = e1 + x e2 at x = 0 with z = -e2: y_hat = 0, r = z, so H_xy = -e2^T r = 1.
  MatrixXd q = MatrixXd::Zero(3, 1);
  q(0, 0) = 1.0;
  MatrixXd s = MatrixXd::Zero(3, 1);
  s(1, 0) = 1.0;
  const AffineModel m(q, {s}, FeasibleBox::cube(1, -1, 1));
  VectorXd z(3);
  z << 0.0, -1.0, 0.0;
  const auto kk = coupling_factor(m, z, VectorXd::Zero(1));
  CHECK(kk.k_paper == doctest::Approx(4.0));
  CHECK(kk.k_exact == doctest::Approx(4.0));
}

TEST_CASE("lift and vp radii") {
  CHECK(lift_constant(sig(1, 1, 0, 0), 1.0, 1.0) == doctest::Approx(2.0));
  CHECK(rho_lift_bound(sig(1, 1, 0, 0), 1.0, VectorXd::Ones(1), 0.0, 1.0) == doctest::Approx(2.0));
  CHECK(rho_lift_bound(sig(1, 1, 0, 0), 1.0, VectorXd::Ones(1), 0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(rho_lift_bound(sig(1, 1, 0, 0), 0.0, VectorXd::Ones(1), 0.0, 1.0), DomainError);

  BasinConstants c;
  c.c1 = 0.7;
  c.c2 = 1.3;
  VpConstants vp;
  vp.k_vp = 1.0;
  vp.c_vp = 1.0;
  CHECK(radius_vp_noiseless(c, vp, 2.0) == doctest::Approx(radius_alpha_ls(c, 2.0, 0.0)));
  c.c1 = 0.0;
  vp.k_vp = 3.0;
  vp.c_vp = 2.0;
  CHECK(radius_vp_noiseless(c, vp, 2.0) == doctest::Approx(std::sqrt(3.0 * 2.0 / 1.3) / 2.0));

  vp.k_exact = 1.0;
  vp.c1_vp = 0.0;
  vp.c2_vp = 1.0;
  vp.lambda_offset = 4.0;
  CHECK(radius_vp_noisy(c, vp) == doctest::Approx(2.0));
  vp.lambda_offset = 0.0;
  CHECK(radius_vp_noisy(c, vp) == 0.0);

  Rng rng(3);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int t = 0; t < 100; ++t) {
    vp.k_exact = 1.0 + u(rng);
    vp.c1_vp = u(rng);
    vp.c2_vp = u(rng);
    vp.lambda_offset = u(rng);
    const double e = radius_vp_noisy(c, vp);
    const double q = vp.lambda_offset - vp.k_exact * (vp.c1_vp * e + vp.c2_vp * e * e);
    CHECK(std::abs(q) < 1e-10 * vp.lambda_offset);
  }
}

TEST_CASE("radii comparison chain on random draws") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(1e-3, 1e3), k(1.0, 100.0);
  for (int t = 0; t < 10000; ++t) {
    BasinConstants c;
    c.c1 = u(rng);
    c.c2 = u(rng);
    VpConstants vp;
    vp.k_vp = k(rng);
    vp.c_vp = u(rng);
    const double lambda = u(rng);
    const double r_ls = radius_alpha_ls(c, lambda, 0.0);
    const auto cmp = radii_comparison(r_ls, vp, c);
    // Independent re-evaluation of the chain.
    const double eps = (std::sqrt(c.c1 * c.c1 + 4 * c.c2 * vp.k_vp * lambda) - c.c1) / (2 * c.c2 * vp.c_vp);
    const double ratio = eps * vp.c_vp / r_ls;
    CHECK(ratio >= std::sqrt(vp.k_vp) * (1 - 1e-9));
    CHECK(ratio <= vp.k_vp * (1 + 1e-9));
    CHECK(cmp.holds);
  }
  VpConstants one;
  one.c_vp = 2.0;
  BasinConstants c;
  c.c1 = 1.0;
  const auto eq = radii_comparison(radius_alpha_ls(c, 3.0, 0.0), one, c);
  CHECK(eq.lower == doctest::Approx(eq.upper));
  CHECK(eq.lower == doctest::Approx((std::sqrt(13.0) - 1.0) / 4.0));
}

TEST_CASE("stability bounds are linear in the noise") {
  const auto s = sig(1.0, 0.5, 2.0, 0.1);
  const MatrixXd j = MatrixXd::Random(20, 3);
  const VectorXd w = VectorXd::Random(20), ys = VectorXd::Ones(2);
  CHECK(stability_bound_ls(s, ys, j, VectorXd::Zero(20), 0.3) == 0.0);
  CHECK(stability_bound_vp(s, 0.4, ys, j, VectorXd::Zero(20), 0.3) == 0.0);
  CHECK(stability_bound_ls(s, ys, j, 2 * w, 0.3) == doctest::Approx(2 * stability_bound_ls(s, ys, j, w, 0.3)));
  CHECK(stability_bound_vp(s, 0.4, ys, j, 2 * w, 0.3) == doctest::Approx(2 * stability_bound_vp(s, 0.4, ys, j, w, 0.3)));
  const double e = (j.transpose() * w).norm() / 0.3;
  CHECK(stability_bound_vp(s, 0.4, ys, j, w, 0.3) ==
        doctest::Approx((2.0 * std::sqrt(2.0) + 0.5) * e + 0.5 / 0.4 * w.norm() + 0.25 / 0.4 * e * std::sqrt(2.0)));
}

TEST_CASE("perturbation envelopes dominate on a psf instance") {
  Rng rng(21);
  auto kernel = unit_speed_wrap(std::make_shared<const GaussianKernel>(Interval{0.05, 0.1}));
  const auto m = build_psf_model(kernel, sample_support(2, 1, 0.02, 1.0, rng), SamplingGrid::uniform(300, 1.0));
  const SpectralConstants s = spectral_constants_psf(*m, 32);
  const Theta star{m->feasible().center(), VectorXd::Ones(2)};
  const VectorXd z = m->evaluate(star.x) * star.y + 0.05 * VectorXd::Random(300);
  const VectorXd w = z - m->evaluate(star.x) * star.y;
  const auto c = basin_constants(s, star.y, w.norm());
  const auto h_star = hessian(*m, z, star);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int tested = 0;
  for (int t = 0; t < 1000; ++t) {
    Theta th = star;
    const double scale = std::pow(10.0, -3.0 + 2.0 * (t % 3));
    for (int i = 0; i < 2; ++i) th.x(i) += 0.05 * scale * u(rng) * m->feasible().upper()(i);
    for (int i = 0; i < 2; ++i) th.y(i) += scale * u(rng);
    if (!m->feasible().contains(th.x)) continue;
    ++tested;
    const double rho = unmixing_metric(s, star.y, th, star);
    const auto h = hessian(*m, z, th);
    CHECK(symmetric_norm(h.full - h_star.full) <= hessian_perturbation_bound(c, rho) * (1 + 1e-9));
    const auto [r1, r2] = auxiliary_metrics(s, star.y, th, star);
    CHECK(r1 <= c.c_r1 * rho * (1 + 1e-9));
    CHECK(r2 <= c.c_r2 * rho * (1 + 1e-9));
    CHECK(symmetric_norm(h.residual_part - h_star.residual_part) <=
          residual_hessian_bound(c, r1, r2, w.norm()) * (1 + 1e-9));
  }
  CHECK(tested > 300);
}
