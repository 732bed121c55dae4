#pragma once

#include <array>
#include <memory>
#include <vector>

#include "sepunmix/kernels.hpp"
#include "sepunmix/model.hpp"

namespace sepunmix {

/// Known spike locations t_{i,k}: p groups of q spikes on [-T/2, T/2].
struct SupportDictionary {
  MatrixXd locations;  // p x q, row i holds group i
  double window = 1.0;
  double delta = 0.0;  // declared minimal separation

  int groups() const { return static_cast<int>(locations.rows()); }
  int per_group() const { return static_cast<int>(locations.cols()); }
  /// Throws InvariantError on out-of-window, repeated, or under-separated locations.
  void validate() const;
};

/// Uniform grid of N points on [-T/2, T/2].
struct SamplingGrid {
  std::vector<double> points;
  double window = 1.0;

  static SamplingGrid uniform(int n, double window);
  int size() const { return static_cast<int>(points.size()); }
  double spacing() const { return window / (size() - 1); }
};

/// Draws p*q separated locations: the first uniform on the window, the second
/// at distance +-delta from it, the rest uniform with rejection of candidates
/// closer than delta to an accepted location. Spikes are assigned to groups
/// in sampling order. Throws PackingError when a spike needs more than 1e5
/// candidates.
SupportDictionary sample_support(int p, int q, double delta, double window, Rng& rng);

/// Smallest pairwise distance between locations; +inf for a single location.
double minimal_separation(const SupportDictionary& support);

/// A(x) = [a_{1,1}(x_1) ... a_{1,q}(x_1) ... a_{p,q}(x_p)] with
/// a_{i,k}(x_i) = g(x_i, t - t_{i,k}). Columns are ordered group-major and
/// every derivative is supported on a single column block.
class PsfModel final : public SeparableModel {
 public:
  PsfModel(std::shared_ptr<const Kernel> kernel, SupportDictionary support, SamplingGrid grid);

  ModelDims dims() const override { return dims_; }
  const FeasibleBox& feasible() const override { return box_; }
  MatrixXd evaluate(const VectorXd& x) const override;
  MatrixXd partial(const VectorXd& x, int order, int i) const override;
  MatrixXd mixed_partial(const VectorXd& x, int i, int j) const override;
  MatrixXd directional(const VectorXd& x, const VectorXd& u, int order) const override;

  /// The N x q blocks d^k A_i / dx_i^k at x_i for k = 0..max_order.
  std::vector<MatrixXd> block(int i, double xi, int max_order) const;

  const Kernel& kernel() const { return *kernel_; }
  std::shared_ptr<const Kernel> kernel_ptr() const { return kernel_; }
  const SupportDictionary& support() const { return support_; }
  const SamplingGrid& grid() const { return grid_; }

 private:
  std::shared_ptr<const Kernel> kernel_;
  SupportDictionary support_;
  SamplingGrid grid_;
  FeasibleBox box_;
  ModelDims dims_;
};

std::shared_ptr<const PsfModel> build_psf_model(std::shared_ptr<const Kernel> kernel,
                                                SupportDictionary support, SamplingGrid grid);

/// Largest singular value of each block d^k A_i(x_i), k in {0..3}.
std::vector<double> block_operator_norms(const PsfModel& model, const VectorXd& x, int k);

/// Block-norm bound on sigma_0..sigma_3 evaluated on a per-axis grid with
/// resolution intervals (resolution + 1 points): sqrt(p) max_i sup ||A_i||
/// for k = 0 and max_i sup ||d^k A_i|| otherwise.
SpectralConstants spectral_constants_psf(const PsfModel& model, int resolution = 64);

}  // namespace sepunmix
