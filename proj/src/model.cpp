#include "sepunmix/model.hpp"

#include <cmath>
#include <sstream>

#include "sepunmix/errors.hpp"

namespace sepunmix {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kThirdOrderStep = 1e-3;

std::string format_vector(const VectorXd& v) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

void ModelDims::validate() const {
  if (n_samples < 1 || n_nonlinear < 1 || n_linear < 1)
    throw ConfigError("model dimensions must be positive");
  if (n_samples < n_linear) throw ConfigError("need at least as many samples as linear weights");
}

VectorXd Theta::stacked() const {
  VectorXd v(x.size() + y.size());
  v << x, y;
  return v;
}

Theta Theta::from_stacked(const VectorXd& v, int p) {
  if (p < 0 || p > v.size()) throw ShapeError("Theta::from_stacked: bad split");
  return Theta{v.head(p), v.tail(v.size() - p)};
}

FeasibleBox::FeasibleBox(VectorXd lower, VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw ShapeError("FeasibleBox: bound lengths differ");
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!(lower_(i) < upper_(i))) throw ConfigError("FeasibleBox: need lower < upper");
  }
}

FeasibleBox FeasibleBox::cube(int p, double lo, double hi) {
  return FeasibleBox(VectorXd::Constant(p, lo), VectorXd::Constant(p, hi));
}

bool FeasibleBox::contains(const VectorXd& x) const {
  if (x.size() != lower_.size()) return false;
  return (x.array() >= lower_.array()).all() && (x.array() <= upper_.array()).all();
}

VectorXd FeasibleBox::clip(const VectorXd& x) const {
  return x.cwiseMax(lower_).cwiseMin(upper_);
}

MatrixXd SeparableModel::directional(const VectorXd& x, const VectorXd& u, int order) const {
  const ModelDims d = dims();
  if (u.size() != d.n_nonlinear) throw ShapeError("directional: direction has wrong length");
  switch (order) {
    case 0:
      return evaluate(x);
    case 1: {
      MatrixXd out = MatrixXd::Zero(d.n_samples, d.n_linear);
      for (int i = 0; i < d.n_nonlinear; ++i) {
        if (u(i) != 0.0) out += u(i) * partial(x, 1, i);
      }
      return out;
    }
    case 2: {
      MatrixXd out = MatrixXd::Zero(d.n_samples, d.n_linear);
      for (int i = 0; i < d.n_nonlinear; ++i) {
        if (u(i) == 0.0) continue;
        out += u(i) * u(i) * partial(x, 2, i);
        for (int j = i + 1; j < d.n_nonlinear; ++j) {
          if (u(j) != 0.0) out += 2.0 * u(i) * u(j) * mixed_partial(x, i, j);
        }
      }
      return out;
    }
    case 3: {
      const double h = kThirdOrderStep;
      return (directional(x + h * u, u, 2) - directional(x - h * u, u, 2)) / (2.0 * h);
    }
    default:
      throw DomainError("directional: order must be in {0,1,2,3}");
  }
}

std::string to_string(Provenance p) {
  return p == Provenance::CoherenceBound ? "CoherenceBound" : "GridEstimate";
}

void SpectralConstants::validate() const {
  for (double s : sigma) {
    if (!std::isfinite(s) || s < 0.0)
      throw InvariantError("spectral constants must be finite and nonnegative");
  }
}

void require_in_box(const SeparableModel& model, const VectorXd& x) {
  if (!model.feasible().contains(x))
    throw DomainError("x = " + format_vector(x) + " lies outside the feasible box");
}

MatrixXd assemble_dictionary(const SeparableModel& model, const VectorXd& x) {
  require_in_box(model, x);
  MatrixXd a = model.evaluate(x);
  const VectorXd s = singular_values(a);
  if (!(s(s.size() - 1) >= kRankTolerance * s(0)))
    throw DegeneracyError("A(x) is rank deficient at x = " + format_vector(x));
  return a;
}

VectorXd residual(const SeparableModel& model, const VectorXd& z, const Theta& theta) {
  const ModelDims d = model.dims();
  require_shape(z.size() == d.n_samples, "residual: z has wrong length");
  require_shape(theta.x.size() == d.n_nonlinear && theta.y.size() == d.n_linear,
                "residual: theta has wrong shape");
  return z - model.evaluate(theta.x) * theta.y;
}

double loss(const SeparableModel& model, const VectorXd& z, const Theta& theta) {
  return 0.5 * residual(model, z, theta).squaredNorm();
}

MatrixXd jacobian(const SeparableModel& model, const Theta& theta) {
  const ModelDims d = model.dims();
  require_shape(theta.x.size() == d.n_nonlinear && theta.y.size() == d.n_linear,
                "jacobian: theta has wrong shape");
  require_in_box(model, theta.x);
  MatrixXd j(d.n_samples, d.n_params());
  for (int i = 0; i < d.n_nonlinear; ++i) j.col(i) = model.partial(theta.x, 1, i) * theta.y;
  j.rightCols(d.n_linear) = model.evaluate(theta.x);
  return j;
}

VectorXd gradient(const SeparableModel& model, const VectorXd& z, const Theta& theta) {
  return -jacobian(model, theta).transpose() * residual(model, z, theta);
}

HessianSplit hessian(const SeparableModel& model, const VectorXd& z, const Theta& theta) {
  const ModelDims d = model.dims();
  const int p = d.n_nonlinear;
  const MatrixXd j = jacobian(model, theta);
  const VectorXd r = residual(model, z, theta);

  HessianSplit out;
  const MatrixXd jtj = j.transpose() * j;
  out.curvature = 0.5 * (jtj + jtj.transpose());
  out.residual_part = MatrixXd::Zero(d.n_params(), d.n_params());
  for (int i = 0; i < p; ++i) {
    const VectorXd cross = -(model.partial(theta.x, 1, i).transpose() * r);
    out.residual_part.block(i, p, 1, d.n_linear) = cross.transpose();
    out.residual_part.block(p, i, d.n_linear, 1) = cross;
    for (int k = i; k < p; ++k) {
      const double v = -r.dot(model.mixed_partial(theta.x, i, k) * theta.y);
      out.residual_part(i, k) = v;
      out.residual_part(k, i) = v;
    }
  }
  out.full = out.curvature + out.residual_part;
  return out;
}

namespace {
void require_metric_inputs(const SpectralConstants& sigma, const Theta& a, const Theta& b) {
  sigma.validate();
  require_shape(a.x.size() == b.x.size() && a.y.size() == b.y.size(),
                "metric: parameter shapes differ");
}
}  // namespace

double unmixing_metric(const SpectralConstants& sigma, const VectorXd& y_star, const Theta& a,
                       const Theta& b) {
  require_metric_inputs(sigma, a, b);
  const double ys = y_star.norm();
  return (sigma[2] * ys + sigma[1]) * (a.x - b.x).norm() + sigma[1] * (a.y - b.y).norm();
}

std::pair<double, double> auxiliary_metrics(const SpectralConstants& sigma, const VectorXd& y_star,
                                            const Theta& a, const Theta& b) {
  require_metric_inputs(sigma, a, b);
  const double ys = y_star.norm();
  const double dx = (a.x - b.x).norm();
  const double dy = (a.y - b.y).norm();
  const double rho1 = sigma[1] * ys * dx + sigma[0] * dy;
  const double rho2 = (sigma[3] * ys + sigma[2]) * dx + 2.0 * sigma[2] * dy;
  return {rho1, rho2};
}

std::vector<VectorXd> box_grid(const FeasibleBox& box, int points_per_axis) {
  const int p = box.dim();
  std::vector<std::vector<double>> axes;
  axes.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) axes.push_back(linspace(box.lower()(i), box.upper()(i), points_per_axis));
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.size();
  std::vector<VectorXd> out;
  out.reserve(total);
  std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
  for (std::size_t n = 0; n < total; ++n) {
    VectorXd x(p);
    for (int i = 0; i < p; ++i) x(i) = axes[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    out.push_back(std::move(x));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (++idx[i] < axes[i].size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

namespace {

double best_direction_norm(const SeparableModel& model, const VectorXd& x, int order,
                           int directions, Rng& rng) {
  const int p = model.dims().n_nonlinear;
  auto score = [&](const VectorXd& u) { return spectral_norm(model.directional(x, u, order)); };

  VectorXd best_u = VectorXd::Unit(p, 0);
  double best = score(best_u);
  for (int i = 1; i < p; ++i) {
    const VectorXd u = VectorXd::Unit(p, i);
    const double s = score(u);
    if (s > best) best = s, best_u = u;
  }
  if (p == 1) return best;  // +-e_1 are the only unit directions
  for (int k = 0; k < directions; ++k) {
    const VectorXd u = random_unit_vector(p, rng);
    const double s = score(u);
    if (s > best) best = s, best_u = u;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  double step = 0.3;
  for (int it = 0; it < 16 && step > 1e-4; ++it) {
    VectorXd u = best_u;
    for (int i = 0; i < p; ++i) u(i) += step * normal(rng);
    u.normalize();
    const double s = score(u);
    if (s > best) {
      best = s;
      best_u = u;
    } else {
      step *= 0.5;
    }
  }
  return best;
}

}  // namespace

SpectralConstants estimate_spectral_constants(const SeparableModel& model, int grid_per_axis,
                                              int directions_per_point, std::uint64_t rng_seed) {
  if (grid_per_axis < 2) throw DomainError("estimate_spectral_constants: grid_per_axis must be >= 2");
  if (directions_per_point < 0) throw DomainError("estimate_spectral_constants: negative direction count");
  const std::vector<VectorXd> grid = box_grid(model.feasible(), grid_per_axis);
  const auto n = static_cast<long>(grid.size());
  std::vector<std::array<double, 4>> per_point(grid.size());

#pragma omp parallel for schedule(dynamic)
  for (long g = 0; g < n; ++g) {
    const VectorXd& x = grid[static_cast<std::size_t>(g)];
    Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(g)));
    auto& out = per_point[static_cast<std::size_t>(g)];
    out[0] = spectral_norm(model.evaluate(x));
    for (int k = 1; k <= 3; ++k)
      out[static_cast<std::size_t>(k)] = best_direction_norm(model, x, k, directions_per_point, rng);
  }

  SpectralConstants sc;
  sc.provenance = Provenance::GridEstimate;
  for (const auto& pt : per_point) {
    for (std::size_t k = 0; k < 4; ++k) sc.sigma[k] = std::max(sc.sigma[k], pt[k]);
  }
  return sc;
}

}  // namespace sepunmix
