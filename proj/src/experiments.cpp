#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sepunmix/basin.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/experiments.hpp"
#include "sepunmix/geometry.hpp"
#include "sepunmix/varpro.hpp"

namespace sepunmix {

namespace {

enum Stream : std::uint64_t { kSupport = 1, kNoise = 2, kBasin = 3, kConvergence = 4, kInit = 5, kDictionaries = 6 };

std::string label(int p, int q) { return "p" + std::to_string(p) + "q" + std::to_string(q); }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

int smt_resolution(int p, int budget) {
  const int per_axis = static_cast<int>(std::floor(std::pow(static_cast<double>(budget), 1.0 / p) + 1e-9));
  return std::clamp(per_axis - 1, 1, 256);
}

json base_manifest(const ExperimentConfig& cfg) {
  const json c = cfg.to_json();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(c.dump())));
  SolverOptions defaults;
  return json{{"artifact", "sepunmix"},
              {"version", artifact_version()},
              {"experiment", to_string(cfg.experiment)},
              {"seed", cfg.seed},
              {"config", c},
              {"config_hash", hash},
              {"solver_defaults",
               {{"lm_lambda0", "1e-3 * mean diag(J^T J)"},
                {"lm_up", defaults.lm_up},
                {"lm_down", defaults.lm_down},
                {"grad_rel_tol", defaults.grad_rel_tol},
                {"max_iters", defaults.max_iters},
                {"gd_step_policy", "armijo backtracking"},
                {"armijo", defaults.armijo},
                {"shrink", defaults.shrink},
                {"box", "componentwise clip"}}},
              {"instances", json::array()}};
}

struct Instance {
  int p = 0, q = 0;
  std::optional<double> u;
  std::shared_ptr<const Kernel> kernel;
  SamplingGrid grid;
  SupportDictionary support;
  std::shared_ptr<const PsfModel> model;
  Theta star;
  VectorXd signal;
  SpectralConstants sigma;
  SpectralConstants sigma_grid;
  double smt = 0.0;
};

Instance make_instance(const ExperimentConfig& cfg, std::size_t index, std::optional<double> u, bool with_smt) {
  Instance in;
  in.p = cfg.configs[index].first;
  in.q = cfg.configs[index].second;
  in.u = u;
  in.kernel = make_kernel(cfg.kernel_spec(u));
  in.grid = SamplingGrid::uniform(cfg.n_samples, cfg.window);
  Rng rng(derive_seed(cfg.seed, kSupport, index));
  try {
    in.support = sample_support(in.p, in.q, cfg.delta, cfg.window, rng);
  } catch (const PackingError& e) {
    throw PackingError(std::string(e.what()) + " (config " + label(in.p, in.q) + ")", e.achieved());
  }
  in.model = build_psf_model(in.kernel, in.support, in.grid);
  in.star = Theta{in.model->feasible().center(), VectorXd::Ones(in.p * in.q)};
  in.signal = in.model->evaluate(in.star.x) * in.star.y;
  in.sigma_grid = spectral_constants_psf(*in.model, cfg.coherence_x_resolution);
  if (cfg.sigma_source == "coherence") {
    const std::vector<double> d{cfg.delta};
    const CoherenceProfile prof =
        coherence_profile(*in.kernel, d, in.grid, cfg.coherence_x_resolution, cfg.truncation_tol);
    in.sigma = coherence_sigma_bound(prof, in.p, cfg.delta);
  } else {
    in.sigma = in.sigma_grid;
  }
  if (with_smt) in.smt = sigma_min_tilde(*in.model, smt_resolution(in.p, cfg.sigma_min_grid_budget));
  return in;
}

// Geometry at the noiseless ground truth.
struct TruthGeometry {
  MatrixXd j;
  ProjectedState vp_state;
  double alpha = 0.0;     // lambda_min H(theta*)
  double alpha_vp = 0.0;  // lambda_min H_vp(x*)
  BasinConstants constants;
  VpConstants vp;
  double r_ls = 0.0;
  double eps_vp = 0.0;
  double cond_j = 0.0;
  double cond_jvp = 0.0;
};

TruthGeometry truth_geometry(const Instance& in) {
  TruthGeometry g;
  g.j = jacobian(*in.model, in.star);
  g.vp_state = projected_state(*in.model, in.signal, in.star.x);
  // Zero residual at the noiseless truth: H = J^T J and H_vp = J_vp^T J_vp.
  const VectorXd sj = singular_values(g.j);
  const VectorXd sv = singular_values(g.vp_state.projected_jacobian);
  g.alpha = sj(sj.size() - 1) * sj(sj.size() - 1);
  g.alpha_vp = sv(sv.size() - 1) * sv(sv.size() - 1);
  g.constants = basin_constants(in.sigma, in.star.y, 0.0);
  g.r_ls = radius_alpha_ls(g.constants, g.alpha, 0.0);
  g.cond_j = condition_number(g.j);
  g.cond_jvp = condition_number(g.vp_state.projected_jacobian);
  if (in.smt > 0.0) {
    g.vp = vp_constants(g.constants, in.sigma, in.smt, in.star.y, g.alpha, g.alpha_vp, coupling_factor(g.vp_state));
    g.eps_vp = radius_vp_noiseless(g.constants, g.vp, g.alpha);
  }
  return g;
}

json instance_json(const Instance& in, const TruthGeometry& g) {
  json j{{"config", label(in.p, in.q)},
         {"p", in.p},
         {"q", in.q},
         {"u", in.u ? json(*in.u) : json(nullptr)},
         {"kernel", in.kernel->name()},
         {"support", to_json(in.support)},
         {"sigma", to_json(in.sigma)},
         {"sigma_grid", to_json(in.sigma_grid)},
         {"c1", g.constants.c1},
         {"c2", g.constants.c2},
         {"c_r0", g.constants.c_r0},
         {"c_r1", g.constants.c_r1},
         {"c_r2", g.constants.c_r2},
         {"lambda_min", g.alpha},
         {"lambda_min_vp", g.alpha_vp},
         {"radius_ls", g.r_ls},
         {"cond_J", g.cond_j},
         {"cond_Jvp", g.cond_jvp}};
  if (in.smt > 0.0) {
    j["sigma_min_tilde"] = in.smt;
    j["c_vp"] = g.vp.c_vp;
    j["K_exact"] = g.vp.k_exact;
    j["K_paper"] = g.vp.k_paper;
    j["k_vp"] = g.vp.k_vp;
    j["eps_vp"] = g.eps_vp;
  }
  return j;
}

using Row = Dataset::Row;

Row row(const std::string& config, const std::string& quantity, double value) {
  Row r;
  r.config = config;
  r.quantity = quantity;
  r.value = value;
  return r;
}

// Empirical block-norm constants over random dictionaries plus the coherence
// envelope, for every delta on the ladder.
void coherence_rows(const ExperimentConfig& cfg, std::size_t index, std::optional<double> u, Dataset& data,
                    json& manifest) {
  const auto [p, q] = cfg.configs[index];
  const std::string cl = label(p, q);
  const auto kernel = make_kernel(cfg.kernel_spec(u));
  const SamplingGrid grid = SamplingGrid::uniform(cfg.n_samples, cfg.window);
  const std::vector<double> ladder = cfg.delta_ladder.build();
  const CoherenceProfile prof = coherence_profile(*kernel, ladder, grid, cfg.coherence_x_resolution, cfg.truncation_tol);
  const double uval = u ? *u : (cfg.kernel_family == "gaussian" ? 2.0 : cfg.u);
  const std::uint64_t base = derive_seed(cfg.seed, kDictionaries, index);

  for (std::size_t j = 0; j < ladder.size(); ++j) {
    const double d = ladder[j];
    const SpectralConstants bound = coherence_sigma_bound(prof, p, d);
    std::array<std::vector<double>, 4> emp;
    for (int r = 0; r < cfg.realizations; ++r) {
      Rng rng(derive_seed(base, j, static_cast<std::uint64_t>(r)));
      SupportDictionary sup;
      try {
        sup = sample_support(p, q, d, cfg.window, rng);
      } catch (const PackingError& e) {
        throw PackingError(std::string(e.what()) + " (config " + cl + ", delta " + std::to_string(d) + ")",
                           e.achieved());
      }
      const auto model = build_psf_model(kernel, sup, grid);
      const SpectralConstants sc = spectral_constants_psf(*model, cfg.coherence_x_resolution);
      for (int k = 0; k < 4; ++k) {
        emp[static_cast<std::size_t>(k)].push_back(sc[k]);
        Row rr = row(cl, "sigma" + std::to_string(k), sc[k]);
        rr.u = uval;
        rr.delta = d;
        rr.trial = r;
        data.add(rr);
      }
    }
    for (int k = 0; k < 4; ++k) {
      const auto& e = emp[static_cast<std::size_t>(k)];
      const std::string ks = std::to_string(k);
      for (auto [name, value] : {std::pair<std::string, double>{"mean_sigma" + ks, mean(e)},
                                 {"std_sigma" + ks, stddev(e)},
                                 {"envelope_sigma" + ks, bound[k]},
                                 {"mu" + ks, prof.mu[static_cast<std::size_t>(k)][j]}}) {
        Row rr = row(cl, name, value);
        rr.u = uval;
        rr.delta = d;
        data.add(rr);
      }
    }
  }
  json entry{{"config", cl}, {"u", uval}, {"kernel", kernel->name()}, {"coherence", to_json(prof)}};
  manifest["instances"].push_back(entry);
}

void add_sample_rows(Dataset& data, const std::string& cl, std::optional<double> u, const BasinReport& rep,
                     const std::string& prefix) {
  for (const BasinSample& s : rep.samples) {
    if (!s.valid) continue;
    auto add = [&](const char* name, double v) {
      Row r = row(cl, prefix + name, v);
      r.u = u;
      r.radius = s.radius;
      r.trial = s.trial;
      data.add(r);
    };
    add("lambda_min", s.lambda_min);
    add("weyl_estimate", s.weyl_estimate);
    add("analytical", s.analytical);
    add("hess_gap", s.hess_gap);
    add("envelope", s.envelope);
    add("max_eig_gap", s.max_eig_gap);
    add("residual_gap", s.residual_gap);
    add("rho", s.rho);
    if (rep.metric == RadiusMetric::UnmixingRho) {
      add("split", s.split);
      add("residual_bound", s.residual_bound);
    } else {
      add("coupling", s.coupling);
      add("rho_bound", s.rho_bound);
    }
  }
}

std::vector<double> per_radius_min(const BasinReport& rep, double BasinSample::*field) {
  std::vector<double> out(rep.radii.size(), std::numeric_limits<double>::infinity());
  for (const BasinSample& s : rep.samples)
    if (s.valid)
      out[static_cast<std::size_t>(s.radius_index)] = std::min(out[static_cast<std::size_t>(s.radius_index)], s.*field);
  return out;
}

}  // namespace

ExperimentResult run_coherence(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.manifest = base_manifest(cfg);
  for (std::size_t i = 0; i < cfg.configs.size(); ++i) coherence_rows(cfg, i, std::nullopt, res.data, res.manifest);
  return res;
}

ExperimentResult run_tail_decay(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.manifest = base_manifest(cfg);
  const std::vector<double> us = cfg.u_list.empty() ? std::vector<double>{2.0, 5.0} : cfg.u_list;
  for (std::size_t i = 0; i < cfg.configs.size(); ++i)
    for (double u : us) coherence_rows(cfg, i, u, res.data, res.manifest);
  return res;
}

ExperimentResult run_basin(const ExperimentConfig& cfg, bool projected) {
  ExperimentResult res;
  res.manifest = base_manifest(cfg);
  const RadiusMetric metric = projected ? RadiusMetric::EuclideanX : RadiusMetric::UnmixingRho;
  for (std::size_t i = 0; i < cfg.configs.size(); ++i) {
    const Instance in = make_instance(cfg, i, std::nullopt, projected);
    const TruthGeometry g = truth_geometry(in);
    const std::string cl = label(in.p, in.q);

    BasinOptions bo;
    bo.metric = metric;
    bo.samples_per_radius = cfg.samples_per_radius;
    bo.sigma_min_tilde = in.smt;
    bo.seed = derive_seed(cfg.seed, kBasin, i);
    bo.radii = projected ? cfg.radii_vp.build(g.eps_vp) : cfg.radii_ls.build(g.r_ls);
    const BasinReport rep = monte_carlo_basin(*in.model, in.signal, in.star, in.sigma, bo);

    add_sample_rows(res.data, cl, std::nullopt, rep, "");
    const auto lam = per_radius_min(rep, &BasinSample::lambda_min);
    const auto weyl = per_radius_min(rep, &BasinSample::weyl_estimate);
    const auto ana = per_radius_min(rep, &BasinSample::analytical);
    for (std::size_t j = 0; j < rep.radii.size(); ++j) {
      for (auto [name, v] : {std::pair<const char*, double>{"curve_lambda_min", lam[j]},
                             {"curve_weyl_estimate", weyl[j]},
                             {"curve_analytical", ana[j]}}) {
        Row r = row(cl, name, v);
        r.radius = rep.radii[j];
        res.data.add(r);
      }
    }
    res.data.add(row(cl, "analytical_radius", rep.analytical_radius));
    res.data.add(row(cl, "empirical_radius", rep.empirical_radius));
    res.data.add(row(cl, "lambda_min_star", rep.lambda_min_star));
    res.data.add(row(cl, "lambda_min_ls_star", g.alpha));
    res.data.add(row(cl, "cond_J", g.cond_j));
    res.data.add(row(cl, "cond_Jvp", g.cond_jvp));
    if (projected) {
      res.data.add(row(cl, "k_vp", rep.vp.k_vp));
      res.data.add(row(cl, "K_exact", rep.vp.k_exact));
      res.data.add(row(cl, "K_paper", rep.vp.k_paper));
      res.data.add(row(cl, "c_vp", rep.vp.c_vp));
    }

    json inst = instance_json(in, g);
    inst["analytical_radius"] = rep.analytical_radius;
    inst["empirical_radius"] = rep.empirical_radius;
    inst["radius_metric"] = to_string(metric);

    if (cfg.basin_snr_db) {
      std::vector<std::vector<double>> lam_n(rep.radii.size()), weyl_n(rep.radii.size()), ana_n(rep.radii.size());
      std::vector<double> radii_n;
      for (int r = 0; r < cfg.basin_realizations; ++r) {
        Rng rng(derive_seed(derive_seed(cfg.seed, kNoise, i), static_cast<std::uint64_t>(r)));
        const VectorXd w = generate_noise(in.signal, *cfg.basin_snr_db, rng);
        BasinOptions nb = bo;
        nb.noise_norm = w.norm();
        nb.seed = derive_seed(bo.seed, static_cast<std::uint64_t>(r) + 1);
        const BasinReport nrep = monte_carlo_basin(*in.model, in.signal + w, in.star, in.sigma, nb);
        const auto l = per_radius_min(nrep, &BasinSample::lambda_min);
        const auto wy = per_radius_min(nrep, &BasinSample::weyl_estimate);
        const auto a = per_radius_min(nrep, &BasinSample::analytical);
        for (std::size_t j = 0; j < rep.radii.size(); ++j) {
          lam_n[j].push_back(l[j]);
          weyl_n[j].push_back(wy[j]);
          ana_n[j].push_back(a[j]);
        }
        radii_n.push_back(nrep.empirical_radius);
      }
      for (std::size_t j = 0; j < rep.radii.size(); ++j) {
        for (auto [name, v] : {std::pair<const char*, double>{"noisy_lambda_min_mean", mean(lam_n[j])},
                               {"noisy_lambda_min_std", stddev(lam_n[j])},
                               {"noisy_weyl_estimate_mean", mean(weyl_n[j])},
                               {"noisy_weyl_estimate_std", stddev(weyl_n[j])},
                               {"noisy_analytical_mean", mean(ana_n[j])},
                               {"noisy_analytical_std", stddev(ana_n[j])}}) {
          Row rr = row(cl, name, v);
          rr.radius = rep.radii[j];
          rr.snr_db = *cfg.basin_snr_db;
          res.data.add(rr);
        }
      }
      Row er = row(cl, "noisy_empirical_radius_mean", mean(radii_n));
      er.snr_db = *cfg.basin_snr_db;
      res.data.add(er);
    }
    res.manifest["instances"].push_back(inst);
  }
  return res;
}

ExperimentResult run_stability(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.manifest = base_manifest(cfg);
  SolverOptions lm = cfg.solver;
  lm.kind = SolverKind::LevenbergMarquardt;
  lm.record_trace = false;

  for (std::size_t i = 0; i < cfg.configs.size(); ++i) {
    const Instance in = make_instance(cfg, i, std::nullopt, true);
    const TruthGeometry g = truth_geometry(in);
    const std::string cl = label(in.p, in.q);
    const double r0_ls = cfg.init_fraction * g.r_ls;
    const double r0_vp = cfg.init_fraction * g.eps_vp;
    res.data.add(row(cl, "cond_J", g.cond_j));
    res.data.add(row(cl, "cond_Jvp", g.cond_jvp));
    res.data.add(row(cl, "alpha", g.alpha));
    res.data.add(row(cl, "alpha_vp", g.alpha_vp));
    res.data.add(row(cl, "init_radius_ls", r0_ls));
    res.data.add(row(cl, "init_radius_vp", r0_vp));

    const int levels = static_cast<int>(cfg.snr_db.size());
    const int reps = cfg.realizations;
    struct Cell {
      double err_joint = 0, err_vp = 0, bound_ls = 0, bound_vp = 0;
      int iters_joint = 0, iters_vp = 0;
      bool censored = false;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(levels * reps));
    const auto jv = g.vp_state.projected_jacobian;

#pragma omp parallel for schedule(dynamic)
    for (long idx = 0; idx < static_cast<long>(cells.size()); ++idx) {
      Cell& c = cells[static_cast<std::size_t>(idx)];
      const double snr = cfg.snr_db[static_cast<std::size_t>(idx / reps)];
      Rng nrng(derive_seed(derive_seed(cfg.seed, kNoise, i), static_cast<std::uint64_t>(idx)));
      const VectorXd w = generate_noise(in.signal, snr, nrng);
      const VectorXd z = in.signal + w;
      try {
        c.bound_ls = stability_bound_ls(in.sigma, in.star.y, g.j, w, g.alpha);
        c.bound_vp = stability_bound_vp(in.sigma, in.smt, in.star.y, jv, w, g.alpha_vp);
        Rng irng(derive_seed(derive_seed(cfg.seed, kInit, i), static_cast<std::uint64_t>(idx)));
        const auto t0 = sample_rho_sphere(in.star, r0_ls, in.sigma, in.model->feasible(), irng);
        const auto x0 = sample_x_sphere(in.star.x, r0_vp, in.model->feasible(), irng);
        if (!t0 || !x0) throw CoverageError("initialization outside the box");
        const SolveResult sj = solve(*joint_objective(in.model, z), t0->stacked(), lm);
        const SolveResult sv = solve(*varpro_objective(in.model, z), *x0, lm);
        const Theta hj = Theta::from_stacked(sj.v, in.p);
        const Theta hv = linear_solve(*in.model, z, sv.v).theta;
        c.iters_joint = sj.iterations;
        c.iters_vp = sv.iterations;
        c.err_joint = unmixing_metric(in.sigma, in.star.y, hj, in.star);
        c.err_vp = unmixing_metric(in.sigma, in.star.y, hv, in.star);
        c.censored = !std::isfinite(c.err_joint) || !std::isfinite(c.err_vp);
      } catch (const Error&) {
        c.censored = true;
      }
    }

    for (int l = 0; l < levels; ++l) {
      const double snr = cfg.snr_db[static_cast<std::size_t>(l)];
      std::vector<double> ej, ev, bl, bv, rl, rv;
      for (int r = 0; r < reps; ++r) {
        const Cell& c = cells[static_cast<std::size_t>(l * reps + r)];
        auto add = [&](const char* name, double v) {
          Row rr = row(cl, name, v);
          rr.snr_db = snr;
          rr.trial = r;
          res.data.add(rr);
        };
        if (c.censored) {
          add("censored", 1.0);
          continue;
        }
        add("error_joint", c.err_joint);
        add("error_vp", c.err_vp);
        add("bound_ls", c.bound_ls);
        add("bound_vp", c.bound_vp);
        add("iterations_joint", c.iters_joint);
        add("iterations_vp", c.iters_vp);
        ej.push_back(c.err_joint);
        ev.push_back(c.err_vp);
        bl.push_back(c.bound_ls);
        bv.push_back(c.bound_vp);
        rl.push_back(c.bound_ls / c.err_joint);
        rv.push_back(c.bound_vp / c.err_vp);
      }
      for (auto [name, v] : {std::pair<const char*, double>{"mean_error_joint", mean(ej)},
                             {"std_error_joint", stddev(ej)},
                             {"mean_error_vp", mean(ev)},
                             {"std_error_vp", stddev(ev)},
                             {"mean_bound_ls", mean(bl)},
                             {"mean_bound_vp", mean(bv)},
                             {"mean_ratio_ls", mean(rl)},
                             {"mean_ratio_vp", mean(rv)},
                             {"completed", static_cast<double>(ej.size())}}) {
        Row rr = row(cl, name, v);
        rr.snr_db = snr;
        res.data.add(rr);
      }
    }
    json inst = instance_json(in, g);
    inst["init_radius_ls"] = r0_ls;
    inst["init_radius_vp"] = r0_vp;
    res.manifest["instances"].push_back(inst);
  }
  return res;
}

ExperimentResult run_convergence_region(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.manifest = base_manifest(cfg);
  const std::vector<double> us = cfg.u_list.empty() ? std::vector<double>{0.5, 5.0} : cfg.u_list;
  const double snr = cfg.snr_db.empty() ? 10.0 : cfg.snr_db.front();
  SolverOptions lm = cfg.solver;
  lm.kind = SolverKind::LevenbergMarquardt;

  for (std::size_t i = 0; i < cfg.configs.size(); ++i) {
    for (std::size_t ui = 0; ui < us.size(); ++ui) {
      const double u = us[ui];
      const Instance in = make_instance(cfg, i, u, true);
      const TruthGeometry g = truth_geometry(in);
      const std::string cl = label(in.p, in.q);
      Rng nrng(derive_seed(cfg.seed, kNoise, i));
      const VectorXd w = generate_noise(in.signal, snr, nrng);
      const VectorXd z = in.signal + w;
      const double half_width = 0.5 * (in.model->feasible().upper() - in.model->feasible().lower()).minCoeff();
      const std::vector<double> radii = cfg.radii_convergence.build(half_width);

      const RadiiComparison cmp = radii_comparison(g.r_ls, g.vp, g.constants);

      BasinOptions bo;
      bo.metric = RadiusMetric::EuclideanX;
      bo.samples_per_radius = cfg.samples_per_radius;
      bo.sigma_min_tilde = in.smt;
      bo.noise_norm = w.norm();
      bo.seed = derive_seed(cfg.seed, kBasin, i);
      bo.radii = radii;
      const BasinReport basin = monte_carlo_basin(*in.model, z, in.star, in.sigma, bo);

      ConvergenceOptions co;
      co.radii = radii;
      co.trials = cfg.convergence_trials;
      co.metric = RadiusMetric::EuclideanX;
      co.solver = lm;
      co.success_tolerance = stability_bound_vp(in.sigma, in.smt, in.star.y, g.vp_state.projected_jacobian, w, g.alpha_vp);
      co.seed = derive_seed(cfg.seed, kConvergence, i);
      const ConvergenceReport conv = empirical_convergence_radius(in.model, z, in.star, in.sigma, co);

      auto add = [&](const std::string& name, double v, std::optional<double> radius = std::nullopt) {
        Row r = row(cl, name, v);
        r.u = u;
        r.snr_db = snr;
        r.radius = radius;
        res.data.add(r);
      };
      add("analytical_lower", cmp.lower);
      add("analytical_upper", cmp.upper);
      add("eps_vp", cmp.eps_vp);
      add("comparison_holds", cmp.holds ? 1.0 : 0.0);
      add("convexity_radius", basin.empirical_radius);
      add("convergence_radius", conv.radius);
      add("gap", conv.radius - basin.empirical_radius);
      add("success_tolerance", co.success_tolerance);
      const auto lam = per_radius_min(basin, &BasinSample::lambda_min);
      for (std::size_t j = 0; j < radii.size(); ++j) {
        const double rate = conv.success_rate[j];
        add("success_rate", rate, radii[j]);
        add("success_rate_std", std::sqrt(rate * (1.0 - rate)), radii[j]);
        add("curve_lambda_min", lam[j], radii[j]);
      }
      json inst = instance_json(in, g);
      inst["convexity_radius"] = basin.empirical_radius;
      inst["convergence_radius"] = conv.radius;
      inst["success_tolerance"] = co.success_tolerance;
      inst["noise_norm"] = w.norm();
      res.manifest["instances"].push_back(inst);
    }
  }
  return res;
}

ExperimentResult run_traces(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.manifest = base_manifest(cfg);
  const std::vector<double> us = cfg.u_list.empty() ? std::vector<double>{0.5, 5.0} : cfg.u_list;
  const double snr = cfg.snr_db.empty() ? 10.0 : cfg.snr_db.front();

  for (std::size_t i = 0; i < cfg.configs.size(); ++i) {
    for (double u : us) {
      const Instance in = make_instance(cfg, i, u, false);
      const TruthGeometry g = truth_geometry(in);
      const std::string cl = label(in.p, in.q);
      Rng nrng(derive_seed(cfg.seed, kNoise, i));
      const VectorXd w = generate_noise(in.signal, snr, nrng);
      const VectorXd z = in.signal + w;
      Rng drng(derive_seed(cfg.seed, kInit, i));
      const VectorXd dir = random_unit_vector(in.p, drng);
      double r0 = cfg.traces_init_radius;
      while (!in.model->feasible().contains(in.star.x + r0 * dir)) r0 *= 0.5;
      const VectorXd x0 = in.star.x + r0 * dir;

      json inst = instance_json(in, g);
      inst["init_radius"] = r0;
      for (const char* form : {"joint", "vp"}) {
        const bool vp = std::string(form) == "vp";
        const auto obj = vp ? varpro_objective(in.model, z) : joint_objective(in.model, z);
        const VectorXd v0 = vp ? x0 : linear_solve(*in.model, z, x0).theta.stacked();
        for (SolverKind kind : {SolverKind::LevenbergMarquardt, SolverKind::GaussNewton, SolverKind::GradientDescent}) {
          SolverOptions so = cfg.solver;
          so.kind = kind;
          so.record_trace = true;
          if (kind == SolverKind::GradientDescent) so.max_iters = cfg.gd_max_iters;
          const SolveResult sr = solve(*obj, v0, so);
          const std::string tag = std::string(form) + "_" + to_string(kind);
          for (const TraceRow& t : sr.trace.rows) {
            for (auto [name, v] : {std::pair<std::string, double>{tag + "_grad_norm", t.grad_norm},
                                   {tag + "_loss", t.loss}}) {
              Row r = row(cl, name, v);
              r.u = u;
              r.snr_db = snr;
              r.trial = t.iteration;
              res.data.add(r);
            }
          }
          for (auto [name, v] : {std::pair<std::string, double>{tag + "_iterations", sr.iterations},
                                 {tag + "_converged", sr.status == SolverStatus::GradToleranceMet ? 1.0 : 0.0},
                                 {tag + "_monotone", sr.trace.monotone() ? 1.0 : 0.0},
                                 {tag + "_grad_tolerance", sr.grad_tolerance}}) {
            Row r = row(cl, name, v);
            r.u = u;
            r.snr_db = snr;
            res.data.add(r);
          }
          inst[tag] = {{"iterations", sr.iterations}, {"status", to_string(sr.status)}};
        }
      }
      res.manifest["instances"].push_back(inst);
    }
  }
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::Coherence: return run_coherence(cfg);
    case ExperimentKind::TailDecay: return run_tail_decay(cfg);
    case ExperimentKind::BasinLS: return run_basin(cfg, false);
    case ExperimentKind::BasinVP: return run_basin(cfg, true);
    case ExperimentKind::Stability: return run_stability(cfg);
    case ExperimentKind::ConvergenceRegion: return run_convergence_region(cfg);
    case ExperimentKind::Traces: return run_traces(cfg);
    case ExperimentKind::SelfCheck: return self_check(cfg);
  }
  throw ConfigError("unknown experiment");
}

}  // namespace sepunmix
