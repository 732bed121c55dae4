#include <algorithm>
#include <deque>
#include <cmath>
#include <functional>

#include "sepunmix/basin.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/experiments.hpp"
#include "sepunmix/geometry.hpp"
#include "sepunmix/varpro.hpp"

namespace sepunmix {

namespace {

// Test harness fault: every first-order derivative changes sign.
class FlippedDerivative final : public SeparableModel {
 public:
  explicit FlippedDerivative(std::shared_ptr<const SeparableModel> m) : m_(std::move(m)) {}
  ModelDims dims() const override { return m_->dims(); }
  const FeasibleBox& feasible() const override { return m_->feasible(); }
  MatrixXd evaluate(const VectorXd& x) const override { return m_->evaluate(x); }
  MatrixXd partial(const VectorXd& x, int order, int i) const override {
    return order == 1 ? MatrixXd(-m_->partial(x, order, i)) : m_->partial(x, order, i);
  }
  MatrixXd mixed_partial(const VectorXd& x, int i, int j) const override { return m_->mixed_partial(x, i, j); }
  MatrixXd directional(const VectorXd& x, const VectorXd& u, int order) const override {
    return order == 1 ? MatrixXd(-m_->directional(x, u, order)) : m_->directional(x, u, order);
  }

 private:
  std::shared_ptr<const SeparableModel> m_;
};

double rel_err(const MatrixXd& a, const MatrixXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / scale;
}

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& v, double h) {
  const VectorXd f0 = f(v);
  MatrixXd j(f0.size(), v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    VectorXd a = v, b = v;
    a(i) += h;
    b(i) -= h;
    j.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

VectorXd interior_point(const FeasibleBox& box, Rng& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0 - margin);
  VectorXd x(box.dim());
  for (int i = 0; i < box.dim(); ++i) x(i) = box.lower()(i) + u(rng) * (box.upper()(i) - box.lower()(i));
  return x;
}

struct Check {
  std::string name;
  bool pass = true;
  long trials = 0;
  long failures = 0;
  double worst = 0.0;
  double tolerance = 0.0;

  void record(double value, bool ok) {
    ++trials;
    if (!ok) {
      ++failures;
      pass = false;
    }
    worst = std::max(worst, value);
  }
};

}  // namespace

ExperimentResult self_check(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.manifest = json{{"artifact", "sepunmix"},
                      {"version", artifact_version()},
                      {"experiment", to_string(cfg.experiment)},
                      {"seed", cfg.seed},
                      {"config", cfg.to_json()}};

  const auto [p, q] = cfg.configs.front();
  const auto kernel = make_kernel(cfg.kernel_spec());
  const SamplingGrid grid = SamplingGrid::uniform(cfg.n_samples, cfg.window);
  Rng rng(derive_seed(cfg.seed, 1));
  const SupportDictionary support = sample_support(p, q, cfg.delta, cfg.window, rng);
  const auto psf = build_psf_model(kernel, support, grid);
  std::shared_ptr<const SeparableModel> model = psf;
  if (cfg.fault_injection == "flip_derivative_sign") model = std::make_shared<FlippedDerivative>(psf);
  const FeasibleBox& box = model->feasible();
  const int d = p * q;
  const Theta star{box.center(), VectorXd::Ones(d)};
  const VectorXd signal = psf->evaluate(star.x) * star.y;
  Rng nrng(derive_seed(cfg.seed, 2));
  const VectorXd z = signal + generate_noise(signal, 0.0, nrng);
  const double width = (box.upper() - box.lower()).maxCoeff();
  const double h = 1e-5 * width;
  const int points = std::max(5, cfg.samples_per_radius);

  std::deque<Check> checks;
  auto add = [&](const std::string& name, double tol) -> Check& {
    checks.push_back(Check{name, true, 0, 0, 0.0, tol});
    return checks.back();
  };

  {
    Check& c = add("kernel_derivatives_fd", 1e-3);
    for (int t = 0; t < points; ++t) {
      const double x = interior_point(FeasibleBox::cube(1, kernel->domain().lo, kernel->domain().hi), rng, 0.05)(0);
      const double hk = 1e-4 * kernel->domain().width();
      const MatrixXd s0 = kernel->sample(x, grid.points, 3);
      const MatrixXd sp = kernel->sample(x + hk, grid.points, 3);
      const MatrixXd sm = kernel->sample(x - hk, grid.points, 3);
      double worst = 0.0;
      for (int k = 0; k < 3; ++k)
        worst = std::max(worst, rel_err((sp.col(k) - sm.col(k)) / (2 * hk), s0.col(k + 1)));
      c.record(worst, worst < c.tolerance);
    }
  }
  {
    Check& c = add("joint_jacobian_fd", 1e-4);
    for (int t = 0; t < points; ++t) {
      const Theta th{interior_point(box, rng, 0.05), star.y + 0.1 * random_unit_vector(d, rng)};
      const MatrixXd fd = fd_jacobian(
          [&](const VectorXd& v) {
            const Theta a = Theta::from_stacked(v, p);
            return VectorXd(psf->evaluate(a.x) * a.y);
          },
          th.stacked(), h);
      const double e = rel_err(jacobian(*model, th), fd);
      c.record(e, e < c.tolerance);
    }
  }
  {
    Check& c = add("joint_hessian_fd", 1e-4);
    for (int t = 0; t < points; ++t) {
      const Theta th{interior_point(box, rng, 0.05), star.y + 0.1 * random_unit_vector(d, rng)};
      const MatrixXd fd = fd_jacobian(
          [&](const VectorXd& v) { return gradient(*model, z, Theta::from_stacked(v, p)); }, th.stacked(), h);
      const MatrixXd an = hessian(*model, z, th).full;
      const double e = rel_err(an, 0.5 * (fd + fd.transpose()));
      c.record(e, e < c.tolerance);
    }
  }
  {
    Check& c = add("projected_gradient_fd", 1e-4);
    for (int t = 0; t < points; ++t) {
      const VectorXd x = interior_point(box, rng, 0.05);
      VectorXd fd(p);
      for (int i = 0; i < p; ++i) {
        VectorXd a = x, b = x;
        a(i) += h;
        b(i) -= h;
        fd(i) = (projected_loss(*psf, z, a) - projected_loss(*psf, z, b)) / (2 * h);
      }
      const double e = rel_err(projected_gradient(*model, z, x), fd);
      c.record(e, e < c.tolerance);
    }
  }
  {
    Check& c = add("projected_hessian_fd", 1e-4);
    for (int t = 0; t < points; ++t) {
      const VectorXd x = interior_point(box, rng, 0.05);
      const MatrixXd fd =
          fd_jacobian([&](const VectorXd& v) { return projected_gradient(*psf, z, v); }, x, h);
      const double e = rel_err(projected_hessian(*model, z, x), 0.5 * (fd + fd.transpose()));
      c.record(e, e < c.tolerance);
    }
  }
  {
    Check& c = add("normal_equations", 1e-8);
    for (int t = 0; t < points; ++t) {
      const VectorXd x = interior_point(box, rng, 0.0);
      const MatrixXd a = psf->evaluate(x);
      const LiftedPoint lp = linear_solve(*psf, z, x);
      const VectorXd ne = (a.transpose() * a).ldlt().solve(a.transpose() * z);
      const double e = rel_err(lp.y_hat, ne);
      c.record(e, e < 1e-6);
    }
  }
  {
    Check& c = add("objective_jacobian_fd", 1e-4);
    const auto joint = joint_objective(model, z);
    const auto vp = varpro_objective(model, z);
    for (int t = 0; t < points; ++t) {
      const VectorXd x = interior_point(box, rng, 0.05);
      const VectorXd v = Theta{x, star.y}.stacked();
      const MatrixXd fj = fd_jacobian(
          [&](const VectorXd& w) {
            const Theta a = Theta::from_stacked(w, p);
            return VectorXd(z - psf->evaluate(a.x) * a.y);
          },
          v, h);
      const MatrixXd fv = fd_jacobian(
          [&](const VectorXd& w) { return VectorXd(z - psf->evaluate(w) * linear_solve(*psf, z, w).y_hat); }, x,
          h);
      const double e = std::max(rel_err(joint->jacobian_at(v), fj), rel_err(vp->jacobian_at(x), fv));
      c.record(e, e < c.tolerance);
    }
  }
  {
    Check& c = add("lifted_loss_equality", 1e-12);
    const auto joint = joint_objective(model, z);
    const auto vp = varpro_objective(model, z);
    for (int t = 0; t < points; ++t) {
      const VectorXd x = interior_point(box, rng, 0.0);
      const LiftedPoint lp = linear_solve(*psf, z, x);
      const double lj = joint->residual_at(lp.theta.stacked()).squaredNorm();
      const double lv = vp->residual_at(x).squaredNorm();
      const double e = std::abs(lj - lv) / std::max(lj, 1e-300);
      c.record(e, e < 1e-10);
    }
  }
  {
    Check& c = add("unit_speed", 1e-4);
    if (!cfg.unit_speed) {
      c.record(0.0, true);
    } else {
      const Interval dom = kernel->domain();
      const L2Window w{cfg.window, 2049};
      for (int t = 0; t < points; ++t) {
        const double s = dom.lo + (dom.width() * (t + 0.5)) / points;
        const double e = std::abs(kernel_speed(*kernel, s, w) - 1.0);
        c.record(e, e < c.tolerance);
      }
    }
  }

  // Small-scale domination and basin checks on the noiseless instance.
  const std::vector<double> ladder = cfg.delta_ladder.build();
  const CoherenceProfile prof = coherence_profile(*kernel, ladder, grid, 16, cfg.truncation_tol);
  {
    Check& c = add("coherence_reference_agreement", 1e-12);
    const CoherenceProfile ref = reference::coherence_profile(*kernel, ladder, grid, 16, cfg.truncation_tol);
    for (int k = 0; k < 4; ++k)
      for (std::size_t j = 0; j < ladder.size(); ++j) {
        const double a = prof.mu[static_cast<std::size_t>(k)][j], b = ref.mu[static_cast<std::size_t>(k)][j];
        const double e = std::abs(a - b) / std::max(std::abs(b), 1e-300);
        c.record(e, e <= c.tolerance);
      }
  }
  {
    Check& c = add("coherence_monotone", 0.0);
    for (int k = 0; k < 4; ++k)
      for (std::size_t j = 1; j < ladder.size(); ++j) {
        const double inc = prof.mu[static_cast<std::size_t>(k)][j] - prof.mu[static_cast<std::size_t>(k)][j - 1];
        c.record(std::max(inc, 0.0), inc <= 0.0);
      }
  }
  {
    Check& c = add("coherence_domination", 0.0);
    for (std::size_t j = 0; j < ladder.size(); ++j) {
      const SpectralConstants bound = coherence_sigma_bound(prof, p, ladder[j]);
      for (int r = 0; r < 3; ++r) {
        Rng drng(derive_seed(cfg.seed, 3, j * 16 + static_cast<std::size_t>(r)));
        const SupportDictionary sup = sample_support(p, q, ladder[j], cfg.window, drng);
        const SpectralConstants emp = spectral_constants_psf(*build_psf_model(kernel, sup, grid), 16);
        for (int k = 0; k < 4; ++k) {
          const double excess = emp[k] - bound[k];
          c.record(std::max(excess / bound[k], 0.0), excess <= 1e-12 * bound[k]);
        }
      }
    }
  }

  const SpectralConstants sigma = [&] {
    const std::vector<double> dd{cfg.delta};
    return coherence_sigma_bound(coherence_profile(*kernel, dd, grid, 16, cfg.truncation_tol), p, cfg.delta);
  }();
  const ProjectedState st = projected_state(*model, signal, star.x);
  const double lam = lambda_min(st.hessian.full);
  const BasinConstants bc = basin_constants(sigma, star.y, 0.0);
  const double r_ls = radius_alpha_ls(bc, lam, 0.0);
  BasinOptions bo;
  bo.metric = RadiusMetric::UnmixingRho;
  bo.samples_per_radius = cfg.samples_per_radius;
  bo.seed = derive_seed(cfg.seed, 4);
  bo.radii = geometric_ladder(0.5 * r_ls, 50.0 * r_ls, 6);
  const BasinReport rep = monte_carlo_basin(*model, signal, star, sigma, bo);
  {
    Check& c = add("hessian_envelope", 1e-12);
    Check& w = add("weyl_certified", 1e-12);
    for (const BasinSample& s : rep.samples) {
      if (!s.valid) continue;
      c.record(std::max(s.hess_gap - s.envelope, 0.0), s.hess_gap <= s.envelope * (1 + 1e-12));
      w.record(std::max(s.max_eig_gap - s.hess_gap, 0.0), s.max_eig_gap <= s.hess_gap * (1 + 1e-12) + 1e-14);
    }
  }
  {
    Check& c = add("basin_radius_ordering", 0.0);
    const bool ok = rep.analytical_radius <= rep.empirical_radius;
    c.record(ok ? 0.0 : rep.analytical_radius - rep.empirical_radius, ok);
  }
  {
    Check& c = add("interlacing", 0.0);
    const double lvp = lambda_min(st.projected_hessian);
    c.record(std::max(lam - lvp, 0.0), lvp >= lam * (1 - 1e-10));
  }
  {
    Check& c = add("radii_chain", 0.0);
    Rng crng(derive_seed(cfg.seed, 5));
    std::uniform_real_distribution<double> lu(-3.0, 3.0);
    for (int t = 0; t < 1000; ++t) {
      BasinConstants b;
      b.c1 = std::pow(10.0, lu(crng));
      b.c2 = std::pow(10.0, lu(crng));
      VpConstants v;
      v.c_vp = std::pow(10.0, lu(crng));
      v.k_vp = 1.0 + std::pow(10.0, lu(crng));
      const double r = std::pow(10.0, lu(crng));
      const RadiiComparison cmp = radii_comparison(r, v, b);
      c.record(cmp.holds ? 0.0 : 1.0, cmp.holds);
    }
  }
  {
    Check& c = add("basin_determinism", 0.0);
    BasinOptions serial = bo;
    serial.parallel = false;
    const BasinReport again = monte_carlo_basin(*model, signal, star, sigma, serial);
    bool same = again.samples.size() == rep.samples.size();
    for (std::size_t i = 0; same && i < rep.samples.size(); ++i)
      same = again.samples[i].lambda_min == rep.samples[i].lambda_min && again.samples[i].rho == rep.samples[i].rho;
    c.record(same ? 0.0 : 1.0, same);
  }
  {
    Check& c = add("solver_monotone", 0.0);
    Rng srng(derive_seed(cfg.seed, 6));
    const auto vp = varpro_objective(model, z);
    for (SolverKind kind : {SolverKind::LevenbergMarquardt, SolverKind::GaussNewton, SolverKind::GradientDescent}) {
      SolverOptions so = cfg.solver;
      so.kind = kind;
      so.max_iters = 500;
      const VectorXd x0 = interior_point(box, srng, 0.25);
      const SolveResult sr = solve(*vp, x0, so);
      const bool ok = sr.trace.monotone();
      c.record(ok ? 0.0 : 1.0, ok);
    }
  }

  json report = json::array();
  for (const Check& c : checks) {
    res.invariants_ok = res.invariants_ok && c.pass;
    Dataset::Row r;
    r.config = "p" + std::to_string(p) + "q" + std::to_string(q);
    r.quantity = c.name;
    r.value = c.pass ? 1.0 : 0.0;
    res.data.add(r);
    report.push_back({{"invariant", c.name},
                      {"pass", c.pass},
                      {"trials", c.trials},
                      {"failures", c.failures},
                      {"worst", c.worst},
                      {"tolerance", c.tolerance}});
  }
  res.manifest["invariants"] = report;
  res.manifest["invariant_count"] = checks.size();
  res.manifest["passed"] = res.invariants_ok;
  res.manifest["fault_injection"] = cfg.fault_injection;
  return res;
}

}  // namespace sepunmix
