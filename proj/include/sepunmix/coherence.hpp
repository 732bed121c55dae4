#pragma once

#include <array>
#include <span>
#include <vector>

#include "sepunmix/kernels.hpp"
#include "sepunmix/model.hpp"
#include "sepunmix/psf.hpp"

namespace sepunmix {

/// Correlations <d^k g(x, t), d^k g(x, t - j h)> on the sampling grid for
/// every grid shift j h, 0 <= j < N, and their suffix maxima.
///
/// The shifted samples are read from one extended sample array, so a table
/// costs one kernel evaluation on 2N - 1 points and O(N^2) multiply-adds.
class CorrelationTable {
 public:
  CorrelationTable(const Kernel& kernel, double x, const SamplingGrid& grid);

  /// Delta-separated correlation for all k at once: the largest
  /// |correlation| over grid shifts j h with j >= floor(delta / h).
  /// Zero once delta exceeds the window.
  std::array<double, 4> rho(double delta) const;
  /// |correlation| at the grid shift j h.
  double correlation(int k, int j) const;
  int shifts() const { return static_cast<int>(suffix_.size()) - 1; }

 private:
  double spacing_;
  std::vector<std::array<double, 4>> abs_corr_;
  std::vector<std::array<double, 4>> suffix_;
};

/// varrho_k(x, delta) on the sampling grid.
double delta_correlation(const Kernel& kernel, double x, int k, double delta, const SamplingGrid& grid);

/// Coherence of the k-th kernel derivative: sup over x_grid of
/// sum_{m in Z} varrho_k(x, |m| delta). The series stops at the first term
/// below truncation_tol times the m = 0 term, or once |m| delta exceeds T.
/// Throws DomainError for delta <= 0.
double coherence(const Kernel& kernel, int k, double delta, std::span<const double> x_grid,
                 const SamplingGrid& grid, double truncation_tol = 1e-12);

/// mu_k(delta) for k = 0..3 on a ladder of separations.
struct CoherenceProfile {
  std::vector<double> deltas;
  std::array<std::vector<double>, 4> mu;  // mu[k][j] at deltas[j]
  int x_resolution = 64;                  // intervals of the x-grid on the kernel domain
  double truncation_tol = 1e-12;
  int truncation_order = 0;               // largest |m| that contributed

  /// Index of delta on the ladder; throws DomainError when absent.
  std::size_t index_of(double delta) const;
  double mu_at(int k, double delta) const { return mu[static_cast<std::size_t>(k)][index_of(delta)]; }
};

/// Coherence profile over a delta ladder, parallel over the x-grid
/// (x_resolution + 1 points spanning the kernel domain).
CoherenceProfile coherence_profile(const Kernel& kernel, std::span<const double> deltas,
                                   const SamplingGrid& grid, int x_resolution = 64,
                                   double truncation_tol = 1e-12);

/// sigma_0 <= sqrt(p mu_0(delta)), sigma_k <= sqrt(mu_k(delta)) for k >= 1.
SpectralConstants coherence_sigma_bound(const CoherenceProfile& profile, int p, double delta);

/// Serial reference implementations that evaluate the kernel at every
/// shifted grid directly. Quadratic in N per shift; kept for tests and
/// benchmarks.
namespace reference {

double delta_correlation(const Kernel& kernel, double x, int k, double delta, const SamplingGrid& grid);

CoherenceProfile coherence_profile(const Kernel& kernel, std::span<const double> deltas,
                                   const SamplingGrid& grid, int x_resolution = 64,
                                   double truncation_tol = 1e-12);

}  // namespace reference

}  // namespace sepunmix
