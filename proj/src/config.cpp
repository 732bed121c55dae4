#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sepunmix/basin.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/experiments.hpp"

namespace sepunmix {

const char* artifact_version() { return "0.1.0"; }

namespace {

constexpr std::pair<ExperimentKind, const char*> kNames[] = {
    {ExperimentKind::Coherence, "Coherence"}, {ExperimentKind::TailDecay, "TailDecay"},
    {ExperimentKind::BasinLS, "BasinLS"},     {ExperimentKind::BasinVP, "BasinVP"},
    {ExperimentKind::Stability, "Stability"}, {ExperimentKind::ConvergenceRegion, "ConvergenceRegion"},
    {ExperimentKind::Traces, "Traces"},       {ExperimentKind::SelfCheck, "SelfCheck"},
};

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void read_ladder(const json& j, const char* key, LadderSpec& out) {
  if (!j.contains(key)) return;
  const json& l = j.at(key);
  if (!l.is_object()) throw ConfigError(std::string("config key '") + key + "' must be an object");
  for (auto it = l.begin(); it != l.end(); ++it)
    if (it.key() != "lo" && it.key() != "hi" && it.key() != "points" && it.key() != "relative")
      throw ConfigError(std::string("unknown key '") + it.key() + "' in " + key);
  read(l, "lo", out.lo);
  read(l, "hi", out.hi);
  read(l, "points", out.points);
  read(l, "relative", out.relative);
}

json ladder_json(const LadderSpec& l) {
  return json{{"lo", l.lo}, {"hi", l.hi}, {"points", l.points}, {"relative", l.relative}};
}

void apply_defaults(ExperimentConfig& c) {
  const bool paper = c.scale == "paper";
  c.n_samples = paper ? 10000 : 2000;
  c.realizations = paper ? 100 : 20;
  c.basin_realizations = paper ? 30 : 10;
  switch (c.experiment) {
    case ExperimentKind::Coherence:
      c.configs = {{5, 5}};
      break;
    case ExperimentKind::TailDecay:
      c.configs = {{5, 5}};
      c.u_list = {2.0, 5.0};
      break;
    case ExperimentKind::BasinLS:
    case ExperimentKind::BasinVP:
      c.configs = {{2, 1}, {3, 3}};
      break;
    case ExperimentKind::Stability:
      if (paper) c.configs = {{2, 1}, {5, 5}};
      else c.configs = {{2, 1}};
      c.snr_db = {-10, -5, 0, 5, 10, 15, 20};
      break;
    case ExperimentKind::ConvergenceRegion:
      c.configs = {{2, 1}};
      c.u_list = {0.5, 5.0};
      c.snr_db = {10};
      break;
    case ExperimentKind::Traces:
      c.configs = {{2, 1}};
      c.u_list = {0.5, 5.0};
      c.snr_db = {10};
      c.solver.grad_rel_tol = 1e-5;
      break;
    case ExperimentKind::SelfCheck:
      c.configs = {{2, 2}};
      c.n_samples = 200;
      c.samples_per_radius = 20;
      c.delta = 2e-2;
      break;
  }
}

}  // namespace

std::string to_string(ExperimentKind k) {
  for (const auto& [kind, name] : kNames)
    if (kind == k) return name;
  return "?";
}

ExperimentKind parse_experiment(const std::string& s) {
  for (const auto& [kind, name] : kNames)
    if (s == name) return kind;
  throw ConfigError("unknown experiment '" + s + "'");
}

std::vector<double> LadderSpec::build(double reference) const {
  const double scale = relative ? reference : 1.0;
  return geometric_ladder(lo * scale, hi * scale, points);
}

KernelSpec ExperimentConfig::kernel_spec(std::optional<double> u_override) const {
  KernelSpec k;
  k.family = kernel_family;
  k.u = u;
  if (u_override) {
    k.family = "ulaplace";
    k.u = *u_override;
  }
  k.unit_speed = unit_speed;
  k.x_min = x_min;
  k.x_max = x_max;
  k.window = window;
  return k;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (scale != "desk" && scale != "paper") fail("scale must be 'desk' or 'paper'");
  if (n_samples < 2) fail("N must be at least 2");
  if (!(window > 0.0)) fail("window T must be positive");
  if (!(delta > 0.0)) fail("delta must be positive");
  if (!(x_min > 0.0) || !(x_min < x_max)) fail("need 0 < x_min < x_max");
  if (kernel_family != "gaussian" && kernel_family != "ulaplace") fail("kernel family must be gaussian or ulaplace");
  if (!(u > 0.0)) fail("u must be positive");
  for (double v : u_list)
    if (!(v > 0.0)) fail("u_list entries must be positive");
  if (configs.empty()) fail("configs must not be empty");
  for (const auto& [p, q] : configs) {
    if (p < 1 || q < 1) fail("p and q must be positive");
    if (!(p * q * delta < window)) fail("need p q delta < T");
    if (n_samples < p * q) fail("need N >= p q");
  }
  if (realizations < 1 || basin_realizations < 1 || samples_per_radius < 1 || convergence_trials < 1)
    fail("realization and sample counts must be positive");
  for (const LadderSpec* l : {&delta_ladder, &radii_ls, &radii_vp, &radii_convergence})
    if (!(l->lo > 0.0) || !(l->hi >= l->lo) || l->points < 1) fail("ladders need 0 < lo <= hi and points >= 1");
  if (experiment == ExperimentKind::Coherence || experiment == ExperimentKind::TailDecay) {
    for (const auto& [p, q] : configs)
      if (!(p * q * delta_ladder.hi < window)) fail("delta ladder too wide for p q");
  }
  if (!(init_fraction > 0.0) || !(traces_init_radius > 0.0)) fail("initialization radii must be positive");
  if (gd_max_iters < 1) fail("gd_max_iters must be positive");
  if (coherence_x_resolution < 1 || !(truncation_tol > 0.0)) fail("bad coherence settings");
  if (sigma_min_grid_budget < 2) fail("sigma_min_grid_budget must be at least 2");
  if (sigma_source != "coherence" && sigma_source != "grid") fail("sigma_source must be coherence or grid");
  if (!fault_injection.empty() && fault_injection != "flip_derivative_sign") fail("unknown fault injection");
  solver.validate();
}

json ExperimentConfig::to_json() const {
  json cfgs = json::array();
  for (const auto& [p, q] : configs) cfgs.push_back(json::array({p, q}));
  json so{{"kind", to_string(solver.kind)},      {"max_iters", solver.max_iters},
          {"grad_tol", solver.grad_tol},         {"grad_rel_tol", solver.grad_rel_tol},
          {"lm_lambda0", solver.lm_lambda0},     {"lm_up", solver.lm_up},
          {"lm_down", solver.lm_down},           {"armijo", solver.armijo},
          {"shrink", solver.shrink}};
  json j{{"experiment", to_string(experiment)},
         {"scale", scale},
         {"seed", seed},
         {"N", n_samples},
         {"T", window},
         {"delta", delta},
         {"x_min", x_min},
         {"x_max", x_max},
         {"kernel", {{"family", kernel_family}, {"u", u}, {"unit_speed", unit_speed}}},
         {"configs", cfgs},
         {"u_list", u_list},
         {"snr_db", snr_db},
         {"basin_snr_db", basin_snr_db ? json(*basin_snr_db) : json(nullptr)},
         {"realizations", realizations},
         {"basin_realizations", basin_realizations},
         {"samples_per_radius", samples_per_radius},
         {"delta_ladder", ladder_json(delta_ladder)},
         {"radii_ls", ladder_json(radii_ls)},
         {"radii_vp", ladder_json(radii_vp)},
         {"radii_convergence", ladder_json(radii_convergence)},
         {"convergence_trials", convergence_trials},
         {"init_fraction", init_fraction},
         {"traces_init_radius", traces_init_radius},
         {"solver", so},
         {"gd_max_iters", gd_max_iters},
         {"coherence_x_resolution", coherence_x_resolution},
         {"truncation_tol", truncation_tol},
         {"sigma_min_grid_budget", sigma_min_grid_budget},
         {"sigma_source", sigma_source},
         {"fault_injection", fault_injection}};
  return j;
}

ExperimentConfig load_config(const json& j, ExperimentKind kind, const std::string& scale, std::uint64_t seed) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.experiment = kind;
  c.scale = scale;
  c.seed = seed;
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be 'desk' or 'paper'");
  apply_defaults(c);

  static const char* known[] = {"experiment", "N", "T", "delta", "x_min", "x_max", "kernel", "configs", "u_list",
                                "snr_db", "basin_snr_db", "realizations", "basin_realizations",
                                "samples_per_radius", "delta_ladder", "radii_ls", "radii_vp", "radii_convergence",
                                "convergence_trials", "init_fraction", "traces_init_radius", "solver",
                                "gd_max_iters", "coherence_x_resolution", "truncation_tol",
                                "sigma_min_grid_budget", "sigma_source", "fault_injection", "scale", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  if (j.contains("experiment") && j.at("experiment").get<std::string>() != to_string(kind))
    throw ConfigError("config names experiment '" + j.at("experiment").get<std::string>() + "'");

  read(j, "N", c.n_samples);
  read(j, "T", c.window);
  read(j, "delta", c.delta);
  read(j, "x_min", c.x_min);
  read(j, "x_max", c.x_max);
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    read(k, "family", c.kernel_family);
    read(k, "u", c.u);
    read(k, "unit_speed", c.unit_speed);
  }
  if (j.contains("configs")) {
    c.configs.clear();
    try {
      for (const json& e : j.at("configs")) c.configs.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key 'configs': ") + e.what());
    }
  }
  read(j, "u_list", c.u_list);
  if (j.contains("snr_db")) {
    if (j.at("snr_db").is_number()) c.snr_db = {j.at("snr_db").get<double>()};
    else read(j, "snr_db", c.snr_db);
  }
  if (j.contains("basin_snr_db") && !j.at("basin_snr_db").is_null()) c.basin_snr_db = j.at("basin_snr_db").get<double>();
  read(j, "realizations", c.realizations);
  read(j, "basin_realizations", c.basin_realizations);
  read(j, "samples_per_radius", c.samples_per_radius);
  read_ladder(j, "delta_ladder", c.delta_ladder);
  read_ladder(j, "radii_ls", c.radii_ls);
  read_ladder(j, "radii_vp", c.radii_vp);
  read_ladder(j, "radii_convergence", c.radii_convergence);
  read(j, "convergence_trials", c.convergence_trials);
  read(j, "init_fraction", c.init_fraction);
  read(j, "traces_init_radius", c.traces_init_radius);
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    if (s.contains("kind")) c.solver.kind = parse_solver_kind(s.at("kind").get<std::string>());
    read(s, "max_iters", c.solver.max_iters);
    read(s, "grad_tol", c.solver.grad_tol);
    read(s, "grad_rel_tol", c.solver.grad_rel_tol);
    read(s, "lm_lambda0", c.solver.lm_lambda0);
    read(s, "lm_up", c.solver.lm_up);
    read(s, "lm_down", c.solver.lm_down);
    read(s, "armijo", c.solver.armijo);
    read(s, "shrink", c.solver.shrink);
  }
  read(j, "gd_max_iters", c.gd_max_iters);
  read(j, "coherence_x_resolution", c.coherence_x_resolution);
  read(j, "truncation_tol", c.truncation_tol);
  read(j, "sigma_min_grid_budget", c.sigma_min_grid_budget);
  read(j, "sigma_source", c.sigma_source);
  read(j, "fault_injection", c.fault_injection);
  c.validate();
  return c;
}

VectorXd generate_noise(const VectorXd& signal, double snr_db, Rng& rng) {
  const double s = signal.norm();
  if (!(s > 0.0)) throw DomainError("generate_noise: signal must be nonzero");
  if (!std::isfinite(snr_db)) throw DomainError("generate_noise: snr must be finite");
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd w(signal.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = nd(rng);
  return w * (s / w.norm() * std::pow(10.0, -snr_db / 20.0));
}

std::vector<const Dataset::Row*> Dataset::select(const std::string& config, const std::string& quantity) const {
  std::vector<const Row*> out;
  for (const Row& r : rows_)
    if (r.config == config && r.quantity == quantity) out.push_back(&r);
  return out;
}

std::vector<double> Dataset::values(const std::string& config, const std::string& quantity) const {
  std::vector<double> out;
  for (const Row* r : select(config, quantity)) out.push_back(r->value);
  return out;
}

void Dataset::write_csv(std::ostream& os) const {
  auto num = [](std::ostringstream& s, const std::optional<double>& v) {
    if (v) s << *v;
  };
  os << "config,u,delta,snr_db,radius,trial,quantity,value\n";
  for (const Row& r : rows_) {
    std::ostringstream s;
    s << std::setprecision(17);
    s << r.config << ',';
    num(s, r.u);
    s << ',';
    num(s, r.delta);
    s << ',';
    num(s, r.snr_db);
    s << ',';
    num(s, r.radius);
    s << ',';
    if (r.trial) s << *r.trial;
    s << ',' << r.quantity << ',';
    if (std::isfinite(r.value)) s << r.value;
    else s << (std::isnan(r.value) ? "nan" : (r.value > 0 ? "inf" : "-inf"));
    os << s.str() << '\n';
  }
}

json to_json(const SupportDictionary& s) {
  json locs = json::array();
  for (int i = 0; i < s.groups(); ++i) {
    json row = json::array();
    for (int k = 0; k < s.per_group(); ++k) row.push_back(s.locations(i, k));
    locs.push_back(row);
  }
  return json{{"locations", locs}, {"p", s.groups()}, {"q", s.per_group()}, {"delta", s.delta}, {"window", s.window}};
}

SupportDictionary support_from_json(const json& j) {
  try {
    SupportDictionary s;
    const int p = j.at("p").get<int>();
    const int q = j.at("q").get<int>();
    s.locations.resize(p, q);
    for (int i = 0; i < p; ++i)
      for (int k = 0; k < q; ++k) s.locations(i, k) = j.at("locations").at(i).at(k).get<double>();
    s.delta = j.at("delta").get<double>();
    s.window = j.at("window").get<double>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("support dictionary: ") + e.what());
  }
}

json to_json(const CoherenceProfile& p) {
  json mu = json::object();
  for (int k = 0; k < 4; ++k) mu["mu" + std::to_string(k)] = p.mu[static_cast<std::size_t>(k)];
  return json{{"deltas", p.deltas},
              {"mu", mu},
              {"x_resolution", p.x_resolution},
              {"truncation_tol", p.truncation_tol},
              {"truncation_order", p.truncation_order}};
}

json to_json(const SpectralConstants& s) {
  return json{{"sigma", s.sigma}, {"provenance", to_string(s.provenance)}};
}

std::filesystem::path write_outputs(const ExperimentResult& r, const ExperimentConfig& cfg,
                                    const std::filesystem::path& out) {
  const std::filesystem::path dir = out / to_string(cfg.experiment);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "data.csv", std::ios::binary);
    r.data.write_csv(f);
    if (!f) throw Error("failed to write " + (dir / "data.csv").string());
  }
  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    f << r.manifest.dump(2) << '\n';
    if (!f) throw Error("failed to write " + (dir / "manifest.json").string());
  }
  return dir;
}

}  // namespace sepunmix
