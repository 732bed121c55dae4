#include "sepunmix/coherence.hpp"

#include <algorithm>
#include <cmath>

#include "sepunmix/errors.hpp"

namespace sepunmix {

namespace {

int first_shift_index(double delta, double spacing) {
  if (delta <= 0.0) return 0;
  // Guard against delta = j h landing one ulp above the grid shift.
  return static_cast<int>(std::floor(delta / spacing * (1.0 + 1e-12)));
}

void check_order(int k) {
  if (k < 0 || k > 3) throw DomainError("coherence: derivative order must be in {0..3}");
}

// Accumulates the m-series for one x given a callable rho(delta) -> array.
template <typename RhoFn>
std::array<double, 4> series(RhoFn&& rho, double delta, double window, double tol, int& max_m) {
  const std::array<double, 4> center = rho(0.0);
  std::array<double, 4> sum = center;
  std::array<bool, 4> active{true, true, true, true};
  for (int m = 1; m * delta <= window; ++m) {
    if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) break;
    const std::array<double, 4> term = rho(m * delta);
    for (std::size_t k = 0; k < 4; ++k) {
      if (!active[k]) continue;
      if (term[k] < tol * center[k] || term[k] == 0.0) {
        active[k] = false;
        continue;
      }
      sum[k] += 2.0 * term[k];
      max_m = std::max(max_m, m);
    }
  }
  return sum;
}

}  // namespace

CorrelationTable::CorrelationTable(const Kernel& kernel, double x, const SamplingGrid& grid)
    : spacing_(grid.spacing()) {
  const int n = grid.size();
  // Extended grid t_0 + m h for m = -(N-1) .. N-1; the window itself starts at N - 1.
  std::vector<double> ext(static_cast<std::size_t>(2 * n - 1));
  const double t0 = grid.points.front();
  for (int m = 0; m < 2 * n - 1; ++m) ext[static_cast<std::size_t>(m)] = t0 + (m - (n - 1)) * spacing_;
  for (int m = 0; m < n; ++m) ext[static_cast<std::size_t>(m + n - 1)] = grid.points[static_cast<std::size_t>(m)];
  const MatrixXd e = kernel.sample(x, ext, 3);

  abs_corr_.assign(static_cast<std::size_t>(n), {});
  for (int k = 0; k < 4; ++k) {
    const auto centered = e.col(k).segment(n - 1, n);
    for (int j = 0; j < n; ++j)
      abs_corr_[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
          std::abs(centered.dot(e.col(k).segment(n - 1 - j, n)));
  }
  suffix_.assign(static_cast<std::size_t>(n) + 1, {0.0, 0.0, 0.0, 0.0});
  for (int j = n - 1; j >= 0; --j)
    for (std::size_t k = 0; k < 4; ++k)
      suffix_[static_cast<std::size_t>(j)][k] =
          std::max(suffix_[static_cast<std::size_t>(j) + 1][k], abs_corr_[static_cast<std::size_t>(j)][k]);
}

std::array<double, 4> CorrelationTable::rho(double delta) const {
  const int j = first_shift_index(delta, spacing_);
  if (j >= shifts()) return {0.0, 0.0, 0.0, 0.0};
  return suffix_[static_cast<std::size_t>(j)];
}

double CorrelationTable::correlation(int k, int j) const {
  return abs_corr_.at(static_cast<std::size_t>(j))[static_cast<std::size_t>(k)];
}

double delta_correlation(const Kernel& kernel, double x, int k, double delta, const SamplingGrid& grid) {
  check_order(k);
  if (delta < 0.0) throw DomainError("delta_correlation: delta must be nonnegative");
  return CorrelationTable(kernel, x, grid).rho(delta)[static_cast<std::size_t>(k)];
}

double coherence(const Kernel& kernel, int k, double delta, std::span<const double> x_grid,
                 const SamplingGrid& grid, double truncation_tol) {
  check_order(k);
  if (!(delta > 0.0)) throw DomainError("coherence: delta must be positive");
  const auto n = static_cast<long>(x_grid.size());
  std::vector<double> per_x(x_grid.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const CorrelationTable table(kernel, x_grid[static_cast<std::size_t>(i)], grid);
    int max_m = 0;
    per_x[static_cast<std::size_t>(i)] =
        series([&](double d) { return table.rho(d); }, delta, grid.window, truncation_tol, max_m)
            [static_cast<std::size_t>(k)];
  }
  return per_x.empty() ? 0.0 : *std::max_element(per_x.begin(), per_x.end());
}

std::size_t CoherenceProfile::index_of(double delta) const {
  for (std::size_t j = 0; j < deltas.size(); ++j)
    if (std::abs(deltas[j] - delta) <= 1e-12 * std::abs(delta)) return j;
  throw DomainError("coherence profile: delta is not on the ladder");
}

namespace {

void check_ladder(std::span<const double> deltas) {
  if (deltas.empty()) throw DomainError("coherence profile: empty delta ladder");
  for (double d : deltas)
    if (!(d > 0.0)) throw DomainError("coherence profile: delta must be positive");
}

CoherenceProfile merge_profile(std::span<const double> deltas, int x_resolution, double tol,
                               const std::vector<std::vector<std::array<double, 4>>>& per_x,
                               const std::vector<int>& max_m) {
  CoherenceProfile out;
  out.deltas.assign(deltas.begin(), deltas.end());
  out.x_resolution = x_resolution;
  out.truncation_tol = tol;
  for (auto& m : out.mu) m.assign(deltas.size(), 0.0);
  for (const auto& row : per_x)
    for (std::size_t j = 0; j < deltas.size(); ++j)
      for (std::size_t k = 0; k < 4; ++k) out.mu[k][j] = std::max(out.mu[k][j], row[j][k]);
  out.truncation_order = max_m.empty() ? 0 : *std::max_element(max_m.begin(), max_m.end());
  return out;
}

}  // namespace

CoherenceProfile coherence_profile(const Kernel& kernel, std::span<const double> deltas,
                                   const SamplingGrid& grid, int x_resolution, double truncation_tol) {
  check_ladder(deltas);
  if (x_resolution < 1) throw DomainError("coherence profile: x_resolution must be positive");
  const Interval dom = kernel.domain();
  const std::vector<double> xs = linspace(dom.lo, dom.hi, x_resolution + 1);
  const auto n = static_cast<long>(xs.size());
  std::vector<std::vector<std::array<double, 4>>> per_x(xs.size());
  std::vector<int> max_m(xs.size(), 0);

#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const CorrelationTable table(kernel, xs[ui], grid);
    per_x[ui].reserve(deltas.size());
    for (double d : deltas)
      per_x[ui].push_back(series([&](double s) { return table.rho(s); }, d, grid.window,
                                 truncation_tol, max_m[ui]));
  }
  return merge_profile(deltas, x_resolution, truncation_tol, per_x, max_m);
}

SpectralConstants coherence_sigma_bound(const CoherenceProfile& profile, int p, double delta) {
  if (p < 1) throw DomainError("coherence_sigma_bound: p must be positive");
  const std::size_t j = profile.index_of(delta);
  SpectralConstants sc;
  sc.provenance = Provenance::CoherenceBound;
  sc.sigma[0] = std::sqrt(static_cast<double>(p) * profile.mu[0][j]);
  for (std::size_t k = 1; k < 4; ++k) sc.sigma[k] = std::sqrt(profile.mu[k][j]);
  sc.validate();
  return sc;
}

namespace reference {

namespace {

std::array<double, 4> direct_rho(const Kernel& kernel, double x, double delta, const SamplingGrid& grid,
                                 const MatrixXd& centered) {
  const int n = grid.size();
  const double h = grid.spacing();
  std::array<double, 4> best{0.0, 0.0, 0.0, 0.0};
  std::vector<double> shifted(static_cast<std::size_t>(n));
  for (int j = first_shift_index(delta, h); j < n; ++j) {
    for (int m = 0; m < n; ++m)
      shifted[static_cast<std::size_t>(m)] = grid.points[static_cast<std::size_t>(m)] - j * h;
    const MatrixXd s = kernel.sample(x, shifted, 3);
    for (int k = 0; k < 4; ++k) {
      double dot = 0.0;
      for (int m = 0; m < n; ++m) dot += centered(m, k) * s(m, k);
      best[static_cast<std::size_t>(k)] = std::max(best[static_cast<std::size_t>(k)], std::abs(dot));
    }
  }
  return best;
}

}  // namespace

double delta_correlation(const Kernel& kernel, double x, int k, double delta, const SamplingGrid& grid) {
  check_order(k);
  if (delta < 0.0) throw DomainError("delta_correlation: delta must be nonnegative");
  const MatrixXd centered = kernel.sample(x, grid.points, 3);
  return direct_rho(kernel, x, delta, grid, centered)[static_cast<std::size_t>(k)];
}

CoherenceProfile coherence_profile(const Kernel& kernel, std::span<const double> deltas,
                                   const SamplingGrid& grid, int x_resolution, double truncation_tol) {
  check_ladder(deltas);
  const Interval dom = kernel.domain();
  const std::vector<double> xs = linspace(dom.lo, dom.hi, x_resolution + 1);
  std::vector<std::vector<std::array<double, 4>>> per_x(xs.size());
  std::vector<int> max_m(xs.size(), 0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const MatrixXd centered = kernel.sample(xs[i], grid.points, 3);
    for (double d : deltas) {
      auto rho = [&](double s) { return direct_rho(kernel, xs[i], s, grid, centered); };
      per_x[i].push_back(series(rho, d, grid.window, truncation_tol, max_m[i]));
    }
  }
  return merge_profile(deltas, x_resolution, truncation_tol, per_x, max_m);
}

}  // namespace reference

}  // namespace sepunmix
