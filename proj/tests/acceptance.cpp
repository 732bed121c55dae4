// Runs the desk-scale acceptance checks and prints one PASS/FAIL line per
// criterion. Exit status is 0 when every criterion could be evaluated; pass
// --strict to also fail on FAIL lines.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sepunmix/basin.hpp"
#include "sepunmix/coherence.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/experiments.hpp"
#include "sepunmix/geometry.hpp"
#include "sepunmix/varpro.hpp"

using namespace sepunmix;
using clk = std::chrono::steady_clock;

namespace {

std::uint64_t g_seed = 1;
int g_failures = 0;
int g_errors = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = clk::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    ++g_errors;
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(clk::now() - t0).count();
  std::string detail = o.detail + "; " + fmt(secs) + " s";
  if (budget_s > 0 && secs > budget_s) {
    o.pass = false;
    detail += " over the " + fmt(budget_s) + " s budget";
  }
  if (!o.pass) ++g_failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail << std::endl;
}

ExperimentConfig desk(ExperimentKind kind, json overrides = json::object()) {
  return load_config(overrides, kind, "desk", g_seed);
}

// (2,1) desk instance on a unit-speed kernel family.
struct Instance {
  std::shared_ptr<const Kernel> kernel;
  std::shared_ptr<const PsfModel> model;
  Theta star;
  VectorXd signal;
};

Instance instance(const KernelSpec& spec, int p, int q, std::uint64_t stream) {
  Instance in;
  in.kernel = make_kernel(spec);
  Rng rng(derive_seed(g_seed, 100, stream));
  in.model = build_psf_model(in.kernel, sample_support(p, q, 5e-3, 1.0, rng), SamplingGrid::uniform(2000, 1.0));
  in.star = {in.model->feasible().center(), VectorXd::Ones(p * q)};
  in.signal = in.model->evaluate(in.star.x) * in.star.y;
  return in;
}

KernelSpec family(const std::string& name, double u, bool unit_speed = true) {
  KernelSpec s;
  s.family = name;
  s.u = u;
  s.unit_speed = unit_speed;
  return s;
}

VectorXd interior_point(const FeasibleBox& box, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  VectorXd x(box.dim());
  for (int i = 0; i < x.size(); ++i) x(i) = box.lower()(i) + u(rng) * (box.upper()(i) - box.lower()(i));
  return x;
}

double kernel_order_error(const Kernel& k, double x, int order, double h) {
  const auto t = linspace(-0.5, 0.5, 2000);
  const MatrixXd a = k.sample(x, t, 3);
  const VectorXd fd = (k.sample(x + h, t, 3).col(order - 1) - k.sample(x - h, t, 3).col(order - 1)) / (2 * h);
  return (a.col(order) - fd).norm() / a.col(order).norm();
}

// Rows of one quantity, in insertion order.
std::vector<const Dataset::Row*> rows(const Dataset& d, const std::string& config, const std::string& quantity) {
  return d.select(config, quantity);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome derivative_oracles() {
  std::map<std::string, double> worst;
  auto note = [&](const std::string& key, double v) { worst[key] = std::max(worst[key], v); };
  const std::vector<KernelSpec> families = {family("gaussian", 2.0, false), family("gaussian", 2.0),
                                            family("ulaplace", 0.5), family("ulaplace", 5.0)};
  for (std::size_t f = 0; f < families.size(); ++f) {
    const Instance in = instance(families[f], 2, 1, f);
    const auto& m = *in.model;
    const double width = (m.feasible().upper() - m.feasible().lower()).maxCoeff();
    Rng rng(derive_seed(g_seed, 200, f));
    Rng noise(derive_seed(g_seed, 201, f));
    const VectorXd z = in.signal + generate_noise(in.signal, 10.0, noise);
    for (int t = 0; t < 200; ++t) {
      const VectorXd x = interior_point(m.feasible(), rng);
      std::uniform_real_distribution<double> uy(0.5, 1.5);
      const Theta th{x, VectorXd::NullaryExpr(2, [&] { return uy(rng); })};
      const double hx = 1e-6 * width;
      for (int i = 0; i < 2; ++i) {
        note("kernel d1", kernel_order_error(*in.kernel, x(i), 1, 10 * hx));
        note("kernel d2", kernel_order_error(*in.kernel, x(i), 2, 10 * hx));
        note("kernel d3", kernel_order_error(*in.kernel, x(i), 3, 10 * hx));
      }
      const VectorXd v = th.stacked();
      auto fwd = [&](const VectorXd& w) {
        const Theta a = Theta::from_stacked(w, 2);
        return VectorXd(m.evaluate(a.x) * a.y);
      };
      auto grad = [&](const VectorXd& w) { return gradient(m, z, Theta::from_stacked(w, 2)); };
      note("J", oracle::rel_err(jacobian(m, th), oracle::fd_jacobian(fwd, v, hx)));
      note("H", oracle::rel_err(hessian(m, z, th).full, oracle::fd_jacobian(grad, v, hx)));

      auto fit = [&](const VectorXd& w) { return VectorXd(m.evaluate(w) * linear_solve(m, z, w).y_hat); };
      auto pgrad = [&](const VectorXd& w) { return projected_gradient(m, z, w); };
      auto lvp = [&](const VectorXd& w) { return VectorXd::Constant(1, projected_loss(m, z, w)); };
      note("J_vp", oracle::rel_err(projected_jacobian(m, z, x), oracle::fd_jacobian(fit, x, hx)));
      note("grad_vp", oracle::rel_err(projected_gradient(m, z, x).transpose(), oracle::fd_jacobian(lvp, x, hx)));
      note("H_vp", oracle::rel_err(projected_hessian(m, z, x), oracle::fd_jacobian(pgrad, x, hx)));
    }
  }
  bool ok = true;
  std::string detail = "max rel err over 4 families x 200 points:";
  for (const auto& [key, v] : worst) {
    const double tol = key == "kernel d3" ? 1e-3 : 1e-4;
    ok = ok && v < tol;
    detail += " " + key + "=" + fmt(v);
  }
  return {ok, detail};
}

Outcome projected_hessian_exactness() {
  const Instance in = instance(family("gaussian", 2.0), 2, 1, 10);
  const auto& m = *in.model;
  const double width = (m.feasible().upper() - m.feasible().lower()).maxCoeff();
  double worst_clean = 0.0, worst_noisy = 0.0;
  Rng noise(derive_seed(g_seed, 300));
  const VectorXd noisy = in.signal + generate_noise(in.signal, 0.0, noise);
  for (const bool with_noise : {false, true}) {
    const VectorXd& z = with_noise ? noisy : in.signal;
    Rng rng(derive_seed(g_seed, 301, with_noise ? 1 : 0));
    for (int t = 0; t < 100; ++t) {
      const VectorXd x = interior_point(m.feasible(), rng);
      auto l = [&](const VectorXd& w) { return projected_loss(m, z, w); };
      // Richardson-extrapolated second differences of the scalar loss.
      const MatrixXd h1 = oracle::fd_hessian(l, x, 6e-4 * width);
      const MatrixXd h2 = oracle::fd_hessian(l, x, 3e-4 * width);
      const MatrixXd fd = (4.0 * h2 - h1) / 3.0;
      double& worst = with_noise ? worst_noisy : worst_clean;
      worst = std::max(worst, oracle::rel_err(projected_hessian(m, z, x), fd));
    }
  }
  return {worst_clean < 1e-4 && worst_noisy < 1e-4,
          "max rel err noiseless=" + fmt(worst_clean) + " 0dB=" + fmt(worst_noisy) + " over 100 points each"};
}

Outcome coherence_envelope(const ExperimentResult& r) {
  const Dataset& d = r.data;
  const std::string cl = "p5q5";
  long checked = 0, violations = 0;
  std::string std_detail;
  bool std_ok = true;
  for (int k = 0; k < 4; ++k) {
    std::map<double, double> envelope;
    for (const auto* row : rows(d, cl, "envelope_sigma" + std::to_string(k))) envelope[*row->delta] = row->value;
    std::map<double, std::vector<double>> samples;
    for (const auto* row : rows(d, cl, "sigma" + std::to_string(k))) {
      ++checked;
      if (row->value > envelope.at(*row->delta)) ++violations;
      samples[*row->delta].push_back(row->value);
    }
    auto sd = [](const std::vector<double>& v) {
      double m = 0.0, s = 0.0;
      for (double x : v) m += x / v.size();
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / (v.size() - 1));
    };
    const double first = sd(samples.begin()->second), last = sd(samples.rbegin()->second);
    std_ok = std_ok && last < first;
    std_detail += " k" + std::to_string(k) + ":" + fmt(first) + "->" + fmt(last);
  }
  return {violations == 0 && std_ok && checked > 0,
          std::to_string(violations) + "/" + std::to_string(checked) + " envelope violations; std first->last" +
              std_detail};
}

Outcome tail_decay() {
  const auto cfg = desk(ExperimentKind::TailDecay);
  const auto deltas = cfg.delta_ladder.build();
  const auto grid = SamplingGrid::uniform(cfg.n_samples, cfg.window);
  const auto p2 = coherence_profile(*make_kernel(cfg.kernel_spec(2.0)), deltas, grid, cfg.coherence_x_resolution);
  const auto p5 = coherence_profile(*make_kernel(cfg.kernel_spec(5.0)), deltas, grid, cfg.coherence_x_resolution);
  std::string detail;
  bool ok = true;
  for (int k = 0; k < 2; ++k) {
    int below = 0;
    double worst = 0.0;
    for (std::size_t j = 0; j < deltas.size(); ++j) {
      const double a = p5.mu[static_cast<std::size_t>(k)][j], b = p2.mu[static_cast<std::size_t>(k)][j];
      if (a < b) ++below;
      worst = std::max(worst, a / b);
    }
    ok = ok && below == static_cast<int>(deltas.size());
    detail += " mu" + std::to_string(k) + ": u=5 below u=2 at " + std::to_string(below) + "/" +
              std::to_string(deltas.size()) + " deltas (max ratio " + fmt(worst) + ")";
  }
  return {ok, detail.substr(1)};
}

Outcome basin_domination(const ExperimentResult& r) {
  const Dataset& d = r.data;
  long samples = 0, env = 0, weyl = 0;
  std::string detail;
  bool order_ok = true;
  for (const std::string cl : {"p2q1", "p3q3"}) {
    const auto gap = d.values(cl, "hess_gap");
    const auto envelope = d.values(cl, "envelope");
    const auto eig = d.values(cl, "max_eig_gap");
    for (std::size_t i = 0; i < gap.size(); ++i) {
      ++samples;
      if (gap[i] > envelope[i] * (1 + 1e-12)) ++env;
      if (eig[i] > gap[i] * (1 + 1e-12) + 1e-14) ++weyl;
    }
    const double ana = d.values(cl, "analytical_radius").at(0);
    const double emp = d.values(cl, "empirical_radius").at(0);
    order_ok = order_ok && ana <= emp;
    detail += " " + cl + " radius " + fmt(ana) + "<=" + fmt(emp);
  }
  return {env == 0 && weyl == 0 && order_ok && samples > 0,
          std::to_string(env) + " envelope and " + std::to_string(weyl) + " Weyl violations in " +
              std::to_string(samples) + " samples;" + detail};
}

Outcome interlacing(const ExperimentResult& basin_vp) {
  std::string detail;
  bool ok = true;
  int instances = 0;
  for (const std::string cl : {"p2q1", "p3q3"}) {
    for (double k : basin_vp.data.values(cl, "k_vp")) {
      ++instances;
      ok = ok && k >= 1.0;
    }
  }
  double min_k = INFINITY;
  for (auto [p, q] : {std::pair{2, 1}, std::pair{5, 5}}) {
    const Instance in = instance(family("gaussian", 2.0), p, q, 20 + p);
    const MatrixXd j = jacobian(*in.model, in.star);
    const MatrixXd jvp = projected_jacobian(*in.model, in.signal, in.star.x);
    const VectorXd sj = singular_values(j), sv = singular_values(jvp);
    const double kvp = std::pow(sv(sv.size() - 1) / sj(sj.size() - 1), 2);
    min_k = std::min(min_k, kvp);
    ++instances;
    const double cj = condition_number(j), cv = condition_number(jvp);
    ok = ok && kvp >= 1.0 && cv <= cj / 3.0;
    detail += " (" + std::to_string(p) + "," + std::to_string(q) + ") cond " + fmt(cj) + "->" + fmt(cv);
  }
  return {ok, std::to_string(instances) + " instances with k_vp>=1 (direct min " + fmt(min_k) + ");" + detail};
}

Outcome radii_chain() {
  Rng rng(derive_seed(g_seed, 700));
  std::uniform_real_distribution<double> lg(-3.0, 3.0), lk(0.0, 3.0);
  int fails = 0;
  for (int t = 0; t < 10000; ++t) {
    BasinConstants c;
    c.c1 = std::pow(10.0, lg(rng));
    c.c2 = std::pow(10.0, lg(rng));
    VpConstants vp;
    vp.k_vp = std::pow(10.0, lk(rng));
    vp.c_vp = std::pow(10.0, lg(rng));
    const double lambda = std::pow(10.0, lg(rng));
    const double r_ls = radius_alpha_ls(c, lambda, 0.0);
    const auto cmp = radii_comparison(r_ls, vp, c);
    const double ratio = cmp.eps_vp * vp.c_vp / r_ls;
    const bool in_range = ratio >= std::sqrt(vp.k_vp) * (1 - 1e-10) && ratio <= vp.k_vp * (1 + 1e-10);
    if (!in_range || !cmp.holds) ++fails;
  }
  return {fails == 0, std::to_string(fails) + "/10000 draws outside [sqrt k, k]"};
}

Outcome stability(const ExperimentResult& r) {
  const Dataset& d = r.data;
  const std::string cl = "p2q1";
  std::map<double, int> disagree, above, total;
  std::map<std::pair<double, long>, double> joint;
  for (const auto* row : rows(d, cl, "error_joint")) joint[{*row->snr_db, *row->trial}] = row->value;
  std::map<std::pair<double, long>, double> bound;
  for (const auto* row : rows(d, cl, "bound_vp")) bound[{*row->snr_db, *row->trial}] = row->value;
  for (const auto* row : rows(d, cl, "error_vp")) {
    const auto key = std::make_pair(*row->snr_db, *row->trial);
    ++total[key.first];
    const double a = joint.at(key), b = row->value;
    if (std::abs(a - b) > 1e-4 * std::max(std::abs(a), std::abs(b))) ++disagree[key.first];
    if (b > bound.at(key)) ++above[key.first];
  }
  int n_disagree = 0, n_above = 0, n_total = 0;
  std::string da;
  for (const auto& [snr, n] : total) {
    n_total += n;
    n_disagree += disagree[snr];
    n_above += above[snr];
    if (disagree[snr]) da += " " + fmt(snr) + "dB:" + std::to_string(disagree[snr]);
  }
  const auto censored = d.values(cl, "censored").size();
  const auto ls = rows(d, cl, "mean_ratio_ls");
  const auto vp = rows(d, cl, "mean_ratio_vp");
  double min_gain = INFINITY;
  for (std::size_t i = 0; i < ls.size(); ++i) min_gain = std::min(min_gain, ls[i]->value / vp[i]->value);
  const bool a = n_disagree == 0, b = n_above == 0, c = min_gain >= 100.0;
  std::string detail = "(a) " + std::string(a ? "ok" : "fail") + " " + std::to_string(n_disagree) + "/" +
                       std::to_string(n_total) + " trials disagree" + (da.empty() ? "" : " [" + da.substr(1) + "]") +
                       "; (b) " + (b ? "ok " : "fail ") + std::to_string(n_above) + " errors above the VP bound" +
                       "; (c) " + (c ? "ok" : "fail") + " min ratio_ls/ratio_vp over levels " + fmt(min_gain) +
                       "; censored " + std::to_string(censored);
  return {a && b && c, detail};
}

Outcome convergence(const ExperimentResult& r) {
  std::map<double, double> conv, cvx;
  for (const auto* row : rows(r.data, "p2q1", "convergence_radius")) conv[*row->u] = row->value;
  for (const auto* row : rows(r.data, "p2q1", "convexity_radius")) cvx[*row->u] = row->value;
  bool ok = true;
  std::string detail;
  for (const auto& [u, c] : conv) {
    ok = ok && c >= cvx.at(u);
    detail += "u=" + fmt(u) + " convergence " + fmt(c) + " convexity " + fmt(cvx.at(u)) + "; ";
  }
  const double gap_low = conv.at(0.5) - cvx.at(0.5), gap_high = conv.at(5.0) - cvx.at(5.0);
  const bool gap_ok = gap_low > gap_high;
  detail += std::string("gap ") + (gap_ok ? "ok " : "fail ") + fmt(gap_low) + " (u=0.5) vs " + fmt(gap_high) + " (u=5)";
  return {ok && gap_ok, detail};
}

Outcome traces(const ExperimentResult& r) {
  bool ok = true;
  std::string detail;
  for (const char* form : {"joint", "vp"})
    for (const char* kind : {"lm", "gn", "gd"}) {
      const std::string tag = std::string(form) + "_" + kind;
      std::map<double, double> iters, conv, mono;
      for (const auto* row : rows(r.data, "p2q1", tag + "_iterations")) iters[*row->u] = row->value;
      for (const auto* row : rows(r.data, "p2q1", tag + "_converged")) conv[*row->u] = row->value;
      for (const auto* row : rows(r.data, "p2q1", tag + "_monotone")) mono[*row->u] = row->value;
      const bool fine = conv.at(0.5) == 1 && conv.at(5.0) == 1 && mono.at(0.5) == 1 && mono.at(5.0) == 1;
      const bool faster = iters.at(5.0) < iters.at(0.5);
      ok = ok && fine && faster;
      detail += " " + tag + " " + fmt(iters.at(0.5)) + (faster ? ">" : "<=") + fmt(iters.at(5.0)) +
                (fine ? "" : " (not converged or not monotone)");
    }
  return {ok, "iterations u=0.5 vs u=5:" + detail};
}

Outcome reproducible() {
  const auto base = std::filesystem::temp_directory_path() / "sepunmix_acceptance";
  std::filesystem::remove_all(base);
  std::string detail;
  bool ok = true;
  for (ExperimentKind kind : {ExperimentKind::BasinLS, ExperimentKind::Traces}) {
    const auto cfg = desk(kind);
    const auto a = write_outputs(run_experiment(cfg), cfg, base / "a");
    const auto b = write_outputs(run_experiment(cfg), cfg, base / "b");
    const std::string da = read_file(a / "data.csv"), db = read_file(b / "data.csv");
    const bool same = !da.empty() && da == db;
    ok = ok && same;
    detail += to_string(kind) + (same ? " identical (" : " differs (") + std::to_string(da.size()) + " bytes); ";
  }
  std::filesystem::remove_all(base);
  return {ok, detail.substr(0, detail.size() - 2)};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) strict = true;
    else if (std::strcmp(argv[i], "--seed") == 0 && i + 1 < argc) g_seed = std::stoull(argv[++i]);
  }
  std::cout << "acceptance, desk scale, seed " << g_seed << std::endl;

  criterion(1, "derivative oracles", 60, derivative_oracles);
  criterion(2, "projected hessian exactness", 0, projected_hessian_exactness);

  ExperimentResult coh;
  criterion(3, "coherence envelope", 180, [&] {
    coh = run_experiment(desk(ExperimentKind::Coherence));
    return coherence_envelope(coh);
  });
  criterion(4, "tail-decay ordering", 0, tail_decay);
  criterion(5, "basin domination and ordering", 180,
            [&] { return basin_domination(run_experiment(desk(ExperimentKind::BasinLS))); });
  criterion(6, "interlacing and conditioning", 0,
            [&] { return interlacing(run_experiment(desk(ExperimentKind::BasinVP))); });
  criterion(7, "radii algebraic chain", 5, radii_chain);
  criterion(8, "stability sweep", 300, [&] { return stability(run_experiment(desk(ExperimentKind::Stability))); });
  criterion(9, "convergence regions", 600,
            [&] { return convergence(run_experiment(desk(ExperimentKind::ConvergenceRegion))); });
  criterion(10, "solver traces", 0, [&] { return traces(run_experiment(desk(ExperimentKind::Traces))); });
  criterion(11, "reproducibility", 0, reproducible);

  std::cout << (11 - g_failures) << "/11 criteria pass" << std::endl;
  if (g_errors > 0) return 1;
  return strict && g_failures > 0 ? 1 : 0;
}
