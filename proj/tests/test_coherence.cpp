#include <doctest.h>

#include "oracles.hpp"
#include "sepunmix/errors.hpp"
#include "sepunmix/coherence.hpp"
#include "sepunmix/psf.hpp"

using namespace sepunmix;

namespace {

// max over shifts j >= floor(delta / h) of |sum_m g(x, t_m) g(x, t_m - j h)|
double brute_rho0(double x, double delta, const SamplingGrid& grid) {
  const double h = grid.spacing();
  const int n = grid.size();
  double best = 0.0;
  for (int j = static_cast<int>(std::floor(delta / h * (1 + 1e-12))); j < n; ++j) {
    double dot = 0.0;
    for (int m = 0; m < n; ++m) {
      const double t = grid.points[static_cast<std::size_t>(m)];
      dot += oracle::gaussian(x, t) * oracle::gaussian(x, t - j * h);
    }
    best = std::max(best, std::abs(dot));
  }
  return best;
}

}  // namespace

TEST_CASE("delta correlation against an exhaustive shift loop") {
  const GaussianKernel g({0.05, 0.1});
  const auto grid = SamplingGrid::uniform(301, 1.0);
  for (double x : {0.05, 0.08})
    for (double d : {0.0, 0.01, 0.05, 0.2})
      CHECK(delta_correlation(g, x, 0, d, grid) == doctest::Approx(brute_rho0(x, d, grid)).epsilon(1e-12));
}

TEST_CASE("delta correlation at zero is the squared grid norm and decreases") {
  const auto k = unit_speed_wrap(std::make_shared<const GaussianKernel>(Interval{0.05, 0.1}));
  const auto grid = SamplingGrid::uniform(401, 1.0);
  const double x = 0.3 * k->domain().hi;
  const MatrixXd s = k->sample(x, grid.points, 3);
  for (int order = 0; order < 4; ++order) {
    CHECK(delta_correlation(*k, x, order, 0.0, grid) == doctest::Approx(s.col(order).squaredNorm()).epsilon(1e-12));
    double prev = INFINITY;
    for (double d : {0.0, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1}) {
      const double r = delta_correlation(*k, x, order, d, grid);
      CHECK(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("fast and reference coherence profiles agree") {
  const auto k = unit_speed_wrap(std::make_shared<const GaussianKernel>(Interval{0.05, 0.1}));
  const auto grid = SamplingGrid::uniform(201, 1.0);
  const std::vector<double> deltas = {0.005, 0.01, 0.03};
  const auto fast = coherence_profile(*k, deltas, grid, 4);
  const auto ref = reference::coherence_profile(*k, deltas, grid, 4);
  for (int order = 0; order < 4; ++order)
    for (std::size_t j = 0; j < deltas.size(); ++j)
      CHECK(fast.mu[static_cast<std::size_t>(order)][j] ==
            doctest::Approx(ref.mu[static_cast<std::size_t>(order)][j]).epsilon(1e-10));
  for (int order = 0; order < 4; ++order)
    for (std::size_t j = 1; j < deltas.size(); ++j)
      CHECK(fast.mu[static_cast<std::size_t>(order)][j] <= fast.mu[static_cast<std::size_t>(order)][j - 1]);
}

TEST_CASE("coherence dominates the centre term") {
  const GaussianKernel g({0.05, 0.1});
  const auto grid = SamplingGrid::uniform(301, 1.0);
  const std::vector<double> xs = {0.05, 0.075, 0.1};
  for (int order = 0; order < 4; ++order) {
    double centre = 0.0;
    for (double x : xs) centre = std::max(centre, delta_correlation(g, x, order, 0.0, grid));
    CHECK(coherence(g, order, 0.02, xs, grid) >= centre);
  }
  CHECK_THROWS_AS(coherence(g, 0, 0.0, xs, grid), DomainError);
}

TEST_CASE("sigma bound from the profile") {
  CoherenceProfile p;
  p.deltas = {0.01};
  for (int k = 0; k < 4; ++k) p.mu[static_cast<std::size_t>(k)] = {4.0 + k};
  const auto s1 = coherence_sigma_bound(p, 1, 0.01);
  CHECK(s1[0] == doctest::Approx(2.0));
  CHECK(s1[1] == doctest::Approx(std::sqrt(5.0)));
  CHECK(coherence_sigma_bound(p, 3, 0.01)[0] == doctest::Approx(std::sqrt(12.0)));
  CHECK(s1.provenance == Provenance::CoherenceBound);
  CHECK_THROWS_AS(p.index_of(0.02), DomainError);
}

TEST_CASE("coherence bound envelopes sampled dictionaries") {
  const auto k = unit_speed_wrap(std::make_shared<const GaussianKernel>(Interval{0.05, 0.1}));
  const auto grid = SamplingGrid::uniform(400, 1.0);
  const std::vector<double> deltas = {0.01, 0.02, 0.04};
  const auto profile = coherence_profile(*k, deltas, grid, 16);
  for (double d : deltas) {
    const auto bound = coherence_sigma_bound(profile, 2, d);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(derive_seed(17, seed));
      const auto m = build_psf_model(k, sample_support(2, 2, d, 1.0, rng), grid);
      const auto emp = spectral_constants_psf(*m, 16);
      for (int order = 0; order < 4; ++order) CHECK(emp[order] <= bound[order] * (1 + 1e-12));
    }
  }
}

TEST_CASE("faster tail decay lowers first-derivative coherence") {
  const auto grid = SamplingGrid::uniform(500, 1.0);
  const std::vector<double> deltas = {0.003, 0.005, 0.01};
  auto profile = [&](double u) {
    const auto k = unit_speed_wrap(std::make_shared<const ULaplaceKernel>(u, Interval{0.05, 0.1}));
    return coherence_profile(*k, deltas, grid, 8);
  };
  const auto p2 = profile(2.0), p5 = profile(5.0);
  for (std::size_t j = 0; j < deltas.size(); ++j) CHECK(p5.mu[1][j] < p2.mu[1][j]);
}
