#include "sepunmix/basin.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>

#include "sepunmix/errors.hpp"
#include "sepunmix/varpro.hpp"

namespace sepunmix {

std::string to_string(RadiusMetric m) {
  return m == RadiusMetric::UnmixingRho ? "unmixing_rho" : "euclidean_x";
}

std::vector<double> geometric_ladder(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw DomainError("geometric_ladder: need 0 < lo <= hi and n >= 1");
  if (n == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(n));
  const double step = std::log(hi / lo) / (n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo * std::exp(step * i);
  out.back() = hi;
  return out;
}

std::vector<double> BasinReport::min_eigs(int j) const {
  std::vector<double> out;
  for (const BasinSample& s : samples)
    if (s.radius_index == j && s.valid) out.push_back(s.lambda_min);
  return out;
}

namespace {

struct RhoDraw {
  Theta theta;
  double split = 0.0;
};

// Point at unmixing distance exactly r from theta*, split uniformly between x and y.
std::optional<RhoDraw> draw_rho_sphere(const Theta& star, double r, const SpectralConstants& sigma,
                                       const FeasibleBox& box, Rng& rng, int max_rejections) {
  const double ax = sigma[2] * star.y.norm() + sigma[1];
  const double ay = sigma[1];
  if (!(ax > 0.0) || !(ay > 0.0)) throw DomainError("rho-sphere sampling needs sigma_1 > 0");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt < max_rejections; ++attempt) {
    const double phi = unif(rng);
    const VectorXd ux = random_unit_vector(static_cast<int>(star.x.size()), rng);
    const VectorXd uy = random_unit_vector(static_cast<int>(star.y.size()), rng);
    Theta t{star.x + (phi * r / ax) * ux, star.y + ((1.0 - phi) * r / ay) * uy};
    if (box.contains(t.x)) return RhoDraw{std::move(t), phi};
  }
  return std::nullopt;
}

std::optional<VectorXd> draw_x_sphere(const VectorXd& x_star, double r, const FeasibleBox& box, Rng& rng,
                                      int max_rejections) {
  for (int attempt = 0; attempt < max_rejections; ++attempt) {
    VectorXd x = x_star + r * random_unit_vector(static_cast<int>(x_star.size()), rng);
    if (box.contains(x)) return x;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Theta> sample_rho_sphere(const Theta& theta_star, double r, const SpectralConstants& sigma,
                                       const FeasibleBox& box, Rng& rng, int max_rejections, double* split) {
  auto d = draw_rho_sphere(theta_star, r, sigma, box, rng, max_rejections);
  if (!d) return std::nullopt;
  if (split) *split = d->split;
  return std::move(d->theta);
}

std::optional<VectorXd> sample_x_sphere(const VectorXd& x_star, double r, const FeasibleBox& box, Rng& rng,
                                        int max_rejections) {
  return draw_x_sphere(x_star, r, box, rng, max_rejections);
}

namespace {

double max_abs(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

double empirical_radius(const std::vector<double>& radii, const std::vector<BasinSample>& samples, double alpha) {
  std::vector<bool> ok(radii.size(), true);
  for (const BasinSample& s : samples)
    if (s.valid && !(s.lambda_min > alpha)) ok[static_cast<std::size_t>(s.radius_index)] = false;
  double best = 0.0;
  for (std::size_t j = 0; j < radii.size() && ok[j]; ++j) best = radii[j];
  return best;
}

BasinReport monte_carlo_basin(const SeparableModel& model, const VectorXd& z, const Theta& theta_star,
                              const SpectralConstants& sigma, const BasinOptions& opts) {
  if (opts.radii.empty()) throw DomainError("monte_carlo_basin: empty radius ladder");
  for (std::size_t j = 1; j < opts.radii.size(); ++j)
    if (!(opts.radii[j] > opts.radii[j - 1])) throw DomainError("monte_carlo_basin: radii must increase");
  if (opts.samples_per_radius < 1) throw DomainError("monte_carlo_basin: need at least one sample");
  require_in_box(model, theta_star.x);

  BasinReport rep;
  rep.metric = opts.metric;
  rep.alpha = opts.alpha;
  rep.seed = opts.seed;
  rep.radii = opts.radii;
  rep.constants = basin_constants(sigma, theta_star.y, opts.noise_norm);
  const BasinConstants& c = rep.constants;
  const bool projected = opts.metric == RadiusMetric::EuclideanX;

  HessianSplit h_ref;
  MatrixXd hvp_ref;
  VectorXd eig_ref;
  Theta lifted_ref;
  double k_ref = 1.0;
  if (projected) {
    const ProjectedState st = projected_state(model, z, theta_star.x);
    h_ref = st.hessian;
    hvp_ref = st.projected_hessian;
    lifted_ref = st.lifted.theta;
    const CouplingFactor k = coupling_factor(st);
    k_ref = k.k_exact;
    rep.lambda_min_star = lambda_min(hvp_ref);
    eig_ref = symmetric_eigenvalues(hvp_ref);
    rep.vp = vp_constants(c, sigma, opts.sigma_min_tilde, theta_star.y, lambda_min(h_ref.full), rep.lambda_min_star, k);
    rep.analytical_radius = opts.noise_norm > 0.0 ? radius_vp_noisy(c, rep.vp)
                                                  : radius_vp_noiseless(c, rep.vp, rep.vp.lambda_min_ls);
  } else {
    h_ref = hessian(model, z, theta_star);
    eig_ref = symmetric_eigenvalues(h_ref.full);
    rep.lambda_min_star = eig_ref(0);
    rep.analytical_radius = radius_alpha_ls(c, rep.lambda_min_star, opts.alpha);
  }

  const int per = opts.samples_per_radius;
  const long total = static_cast<long>(opts.radii.size()) * per;
  rep.samples.assign(static_cast<std::size_t>(total), BasinSample{});

  auto run_sample = [&](long idx) {
    const int j = static_cast<int>(idx / per);
    const int t = static_cast<int>(idx % per);
    const double r = opts.radii[static_cast<std::size_t>(j)];
    BasinSample s;
    s.radius_index = j;
    s.trial = t;
    s.radius = r;
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t)));
    if (projected) {
      const auto x = draw_x_sphere(theta_star.x, r, model.feasible(), rng, opts.max_rejections);
      if (!x) return s;
      const ProjectedState st = projected_state(model, z, *x);
      const VectorXd eig = symmetric_eigenvalues(st.projected_hessian);
      s.lambda_min = eig(0);
      s.max_eig_gap = max_abs(eig - eig_ref);
      s.hess_gap = symmetric_norm(st.hessian.full - h_ref.full);
      s.residual_gap = symmetric_norm(st.hessian.residual_part - h_ref.residual_part);
      s.rho = unmixing_metric(sigma, theta_star.y, st.lifted.theta, lifted_ref);
      s.rho_bound = rho_lift_bound(sigma, opts.sigma_min_tilde, theta_star.y, opts.noise_norm, r);
      s.envelope = hessian_perturbation_bound(c, s.rho_bound);
      s.coupling = std::max(coupling_factor(st).k_exact, k_ref);
      s.weyl_estimate = rep.lambda_min_star - s.coupling * s.hess_gap;
      s.analytical = rep.lambda_min_star - k_ref * s.envelope;
    } else {
      const auto d = draw_rho_sphere(theta_star, r, sigma, model.feasible(), rng, opts.max_rejections);
      if (!d) return s;
      s.split = d->split;
      const HessianSplit h = hessian(model, z, d->theta);
      const VectorXd eig = symmetric_eigenvalues(h.full);
      s.lambda_min = eig(0);
      s.max_eig_gap = max_abs(eig - eig_ref);
      s.hess_gap = symmetric_norm(h.full - h_ref.full);
      s.residual_gap = symmetric_norm(h.residual_part - h_ref.residual_part);
      s.rho = unmixing_metric(sigma, theta_star.y, d->theta, theta_star);
      s.rho_bound = s.rho;
      s.envelope = hessian_perturbation_bound(c, s.rho);
      const auto [rho1, rho2] = auxiliary_metrics(sigma, theta_star.y, d->theta, theta_star);
      s.residual_bound = residual_hessian_bound(c, rho1, rho2, opts.noise_norm);
      s.weyl_estimate = rep.lambda_min_star - s.hess_gap;
      s.analytical = rep.lambda_min_star - hessian_perturbation_bound(c, r);
    }
    s.valid = true;
    return s;
  };

  if (opts.parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < total; ++i) rep.samples[static_cast<std::size_t>(i)] = run_sample(i);
  } else {
    for (long i = 0; i < total; ++i) rep.samples[static_cast<std::size_t>(i)] = run_sample(i);
  }

  for (std::size_t j = 0; j < opts.radii.size(); ++j) {
    const auto first = rep.samples.begin() + static_cast<long>(j) * per;
    if (std::none_of(first, first + per, [](const BasinSample& s) { return s.valid; }))
      throw CoverageError("monte_carlo_basin: no sample fits in the box at radius " +
                          std::to_string(opts.radii[j]));
  }
  rep.empirical_radius = empirical_radius(rep.radii, rep.samples, opts.alpha);
  return rep;
}

ConvergenceReport empirical_convergence_radius(std::shared_ptr<const SeparableModel> model, const VectorXd& z,
                                               const Theta& theta_star, const SpectralConstants& sigma,
                                               const ConvergenceOptions& opts) {
  if (opts.radii.empty()) throw DomainError("convergence radius: empty ladder");
  if (opts.trials < 1) throw DomainError("convergence radius: need at least one trial");
  opts.solver.validate();
  const bool projected = opts.metric == RadiusMetric::EuclideanX;
  const auto objective = projected ? varpro_objective(model, z) : joint_objective(model, z);
  const int per = opts.trials;
  const long total = static_cast<long>(opts.radii.size()) * per;
  std::vector<double> err(static_cast<std::size_t>(total), std::numeric_limits<double>::infinity());
  SolverOptions so = opts.solver;
  so.record_trace = false;

  auto run_trial = [&](long idx) {
    const int j = static_cast<int>(idx / per);
    const int t = static_cast<int>(idx % per);
    const double r = opts.radii[static_cast<std::size_t>(j)];
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t)));
    try {
      Theta hat;
      if (projected) {
        const auto x0 = draw_x_sphere(theta_star.x, r, model->feasible(), rng, opts.max_rejections);
        if (!x0) return std::numeric_limits<double>::infinity();
        const SolveResult res = solve(*objective, *x0, so);
        hat = linear_solve(*model, z, res.v).theta;
      } else {
        const auto d = draw_rho_sphere(theta_star, r, sigma, model->feasible(), rng, opts.max_rejections);
        if (!d) return std::numeric_limits<double>::infinity();
        const SolveResult res = solve(*objective, d->theta.stacked(), so);
        hat = Theta::from_stacked(res.v, static_cast<int>(theta_star.x.size()));
      }
      const double e = unmixing_metric(sigma, theta_star.y, hat, theta_star);
      return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  if (opts.parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < total; ++i) err[static_cast<std::size_t>(i)] = run_trial(i);
  } else {
    for (long i = 0; i < total; ++i) err[static_cast<std::size_t>(i)] = run_trial(i);
  }

  ConvergenceReport rep;
  rep.radii = opts.radii;
  bool prefix = true;
  for (std::size_t j = 0; j < opts.radii.size(); ++j) {
    const auto first = err.begin() + static_cast<long>(j) * per;
    rep.errors.emplace_back(first, first + per);
    const long ok = std::count_if(first, first + per, [&](double e) { return e <= opts.success_tolerance; });
    rep.success_rate.push_back(static_cast<double>(ok) / per);
    if (prefix && ok == per) rep.radius = opts.radii[j];
    else prefix = false;
  }
  return rep;
}

void write_basin_csv(std::ostream& os, const BasinReport& rep) {
  os << "radius,trial,split,rho,lambda_min,hess_gap,max_eig_gap,envelope,residual_gap,residual_bound,"
        "coupling,weyl_estimate,analytical,rho_bound,valid\n";
  os << std::setprecision(17);
  for (const BasinSample& s : rep.samples)
    os << s.radius << ',' << s.trial << ',' << s.split << ',' << s.rho << ',' << s.lambda_min << ','
       << s.hess_gap << ',' << s.max_eig_gap << ',' << s.envelope << ',' << s.residual_gap << ','
       << s.residual_bound << ',' << s.coupling << ',' << s.weyl_estimate << ',' << s.analytical << ','
       << s.rho_bound << ',' << (s.valid ? 1 : 0) << '\n';
}

}  // namespace sepunmix
