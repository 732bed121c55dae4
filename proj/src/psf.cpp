#include "sepunmix/psf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sepunmix/errors.hpp"

namespace sepunmix {

namespace {

constexpr int kRetryCap = 100000;
constexpr double kSeparationSlack = 1e-9;

std::vector<double> flat_locations(const SupportDictionary& s) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(s.locations.size()));
  for (Eigen::Index i = 0; i < s.locations.rows(); ++i)
    for (Eigen::Index k = 0; k < s.locations.cols(); ++k) out.push_back(s.locations(i, k));
  return out;
}

}  // namespace

void SupportDictionary::validate() const {
  if (locations.size() == 0) throw InvariantError("support: no locations");
  const double half = 0.5 * window;
  for (Eigen::Index i = 0; i < locations.size(); ++i) {
    const double t = locations.data()[i];
    if (!(t >= -half && t <= half)) throw InvariantError("support: location outside the window");
  }
  const double sep = minimal_separation(*this);
  if (!(sep > 0.0)) throw InvariantError("support: repeated location");
  if (sep < delta * (1.0 - kSeparationSlack))
    throw InvariantError("support: minimal separation below the declared delta");
}

SamplingGrid SamplingGrid::uniform(int n, double window) {
  if (n < 2 || !(window > 0.0)) throw ConfigError("sampling grid: need N >= 2 and T > 0");
  return SamplingGrid{linspace(-0.5 * window, 0.5 * window, n), window};
}

SupportDictionary sample_support(int p, int q, double delta, double window, Rng& rng) {
  if (p < 1 || q < 1) throw ConfigError("sample_support: p and q must be positive");
  if (!(delta > 0.0) || !(window > 0.0)) throw ConfigError("sample_support: delta and T must be positive");
  const int total = p * q;
  if (!(total * delta < window)) throw ConfigError("sample_support: p*q*delta must be below T");

  const double half = 0.5 * window;
  std::uniform_real_distribution<double> uniform(-half, half);
  std::vector<double> locs;
  locs.reserve(static_cast<std::size_t>(total));
  locs.push_back(uniform(rng));

  if (total >= 2) {
    std::bernoulli_distribution coin(0.5);
    bool placed = false;
    for (int attempt = 0; attempt < kRetryCap && !placed; ++attempt) {
      const double cand = locs[0] + (coin(rng) ? delta : -delta);
      if (cand >= -half && cand <= half) {
        locs.push_back(cand);
        placed = true;
      }
    }
    if (!placed) throw PackingError("sample_support: could not place the second spike", locs.size());
  }

  while (static_cast<int>(locs.size()) < total) {
    bool placed = false;
    for (int attempt = 0; attempt < kRetryCap; ++attempt) {
      const double cand = uniform(rng);
      const bool clear = std::all_of(locs.begin(), locs.end(),
                                     [&](double t) { return std::abs(cand - t) >= delta; });
      if (clear) {
        locs.push_back(cand);
        placed = true;
        break;
      }
    }
    if (!placed)
      throw PackingError("sample_support: retry cap exceeded after placing " +
                             std::to_string(locs.size()) + " of " + std::to_string(total) + " spikes",
                         locs.size());
  }

  SupportDictionary out;
  out.locations.resize(p, q);
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < q; ++k) out.locations(i, k) = locs[static_cast<std::size_t>(i * q + k)];
  out.window = window;
  out.delta = delta;
  return out;
}

double minimal_separation(const SupportDictionary& support) {
  std::vector<double> t = flat_locations(support);
  if (t.size() < 2) return std::numeric_limits<double>::infinity();
  std::sort(t.begin(), t.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < t.size(); ++i) best = std::min(best, t[i] - t[i - 1]);
  return best;
}

PsfModel::PsfModel(std::shared_ptr<const Kernel> kernel, SupportDictionary support, SamplingGrid grid)
    : kernel_(std::move(kernel)), support_(std::move(support)), grid_(std::move(grid)) {
  if (!kernel_) throw ConfigError("PsfModel: null kernel");
  const Interval dom = kernel_->domain();
  if (!(dom.lo < dom.hi)) throw ConfigError("PsfModel: empty kernel domain");
  if (std::abs(support_.window - grid_.window) > 1e-12 * std::max(1.0, grid_.window))
    throw ConfigError("PsfModel: support and sampling grid use different windows");
  support_.validate();
  const int p = support_.groups();
  const int q = support_.per_group();
  dims_ = ModelDims{grid_.size(), p, p * q};
  dims_.validate();
  box_ = FeasibleBox::cube(p, dom.lo, dom.hi);
}

std::vector<MatrixXd> PsfModel::block(int i, double xi, int max_order) const {
  const int q = support_.per_group();
  const int n = grid_.size();
  std::vector<double> shifted(static_cast<std::size_t>(n) * static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k) {
    const double c = support_.locations(i, k);
    for (int m = 0; m < n; ++m)
      shifted[static_cast<std::size_t>(k) * n + m] = grid_.points[static_cast<std::size_t>(m)] - c;
  }
  const MatrixXd g = kernel_->sample(xi, shifted, max_order);
  std::vector<MatrixXd> out(static_cast<std::size_t>(max_order + 1), MatrixXd(n, q));
  for (int o = 0; o <= max_order; ++o)
    for (int k = 0; k < q; ++k)
      out[static_cast<std::size_t>(o)].col(k) = g.col(o).segment(static_cast<Eigen::Index>(k) * n, n);
  return out;
}

MatrixXd PsfModel::evaluate(const VectorXd& x) const {
  if (x.size() != dims_.n_nonlinear) throw ShapeError("PsfModel: x has wrong length");
  const int q = support_.per_group();
  MatrixXd a(dims_.n_samples, dims_.n_linear);
  for (int i = 0; i < dims_.n_nonlinear; ++i) a.middleCols(i * q, q) = block(i, x(i), 0)[0];
  return a;
}

MatrixXd PsfModel::partial(const VectorXd& x, int order, int i) const {
  if (x.size() != dims_.n_nonlinear || i < 0 || i >= dims_.n_nonlinear)
    throw ShapeError("PsfModel: bad partial index");
  if (order < 1 || order > 3) throw DomainError("partial: order must be in {1,2,3}");
  const int q = support_.per_group();
  MatrixXd out = MatrixXd::Zero(dims_.n_samples, dims_.n_linear);
  out.middleCols(i * q, q) = block(i, x(i), order)[static_cast<std::size_t>(order)];
  return out;
}

MatrixXd PsfModel::mixed_partial(const VectorXd& x, int i, int j) const {
  if (i != j) {
    if (x.size() != dims_.n_nonlinear || i < 0 || j < 0 || i >= dims_.n_nonlinear ||
        j >= dims_.n_nonlinear)
      throw ShapeError("PsfModel: bad partial index");
    return MatrixXd::Zero(dims_.n_samples, dims_.n_linear);
  }
  return partial(x, 2, i);
}

MatrixXd PsfModel::directional(const VectorXd& x, const VectorXd& u, int order) const {
  if (x.size() != dims_.n_nonlinear || u.size() != dims_.n_nonlinear)
    throw ShapeError("PsfModel: directional arguments have wrong length");
  if (order < 0 || order > 3) throw DomainError("directional: order must be in {0,1,2,3}");
  if (order == 0) return evaluate(x);
  const int q = support_.per_group();
  MatrixXd out = MatrixXd::Zero(dims_.n_samples, dims_.n_linear);
  for (int i = 0; i < dims_.n_nonlinear; ++i) {
    if (u(i) == 0.0) continue;
    out.middleCols(i * q, q) =
        std::pow(u(i), order) * block(i, x(i), order)[static_cast<std::size_t>(order)];
  }
  return out;
}

std::shared_ptr<const PsfModel> build_psf_model(std::shared_ptr<const Kernel> kernel,
                                                SupportDictionary support, SamplingGrid grid) {
  return std::make_shared<const PsfModel>(std::move(kernel), std::move(support), std::move(grid));
}

std::vector<double> block_operator_norms(const PsfModel& model, const VectorXd& x, int k) {
  if (k < 0 || k > 3) throw DomainError("block_operator_norms: k must be in {0..3}");
  if (x.size() != model.dims().n_nonlinear) throw ShapeError("block_operator_norms: x has wrong length");
  std::vector<double> out;
  for (int i = 0; i < model.dims().n_nonlinear; ++i)
    out.push_back(spectral_norm(model.block(i, x(i), k)[static_cast<std::size_t>(k)]));
  return out;
}

SpectralConstants spectral_constants_psf(const PsfModel& model, int resolution) {
  if (resolution < 1) throw DomainError("spectral_constants_psf: resolution must be positive");
  const int p = model.dims().n_nonlinear;
  const Interval dom = model.kernel().domain();
  const std::vector<double> xs = linspace(dom.lo, dom.hi, resolution + 1);
  const long cells = static_cast<long>(p) * static_cast<long>(xs.size());
  std::vector<std::array<double, 4>> norms(static_cast<std::size_t>(cells));

#pragma omp parallel for schedule(dynamic)
  for (long c = 0; c < cells; ++c) {
    const int i = static_cast<int>(c / static_cast<long>(xs.size()));
    const double xi = xs[static_cast<std::size_t>(c % static_cast<long>(xs.size()))];
    const std::vector<MatrixXd> blocks = model.block(i, xi, 3);
    for (std::size_t k = 0; k < 4; ++k) norms[static_cast<std::size_t>(c)][k] = spectral_norm(blocks[k]);
  }

  SpectralConstants sc;
  sc.provenance = Provenance::GridEstimate;
  for (const auto& n : norms)
    for (std::size_t k = 0; k < 4; ++k) sc.sigma[k] = std::max(sc.sigma[k], n[k]);
  sc.sigma[0] *= std::sqrt(static_cast<double>(p));
  return sc;
}

}  // namespace sepunmix
