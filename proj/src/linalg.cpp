#include "sepunmix/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sepunmix {

VectorXd singular_values(const MatrixXd& m) {
  if (m.size() == 0) return VectorXd();
  if (m.rows() > 2 * m.cols()) {
    Eigen::HouseholderQR<MatrixXd> qr(m);
    MatrixXd r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<MatrixXd>(r).singularValues();
  }
  return Eigen::JacobiSVD<MatrixXd>(m).singularValues();
}

double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return singular_values(m)(0);
}

double condition_number(const MatrixXd& m) {
  const VectorXd s = singular_values(m);
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

VectorXd symmetric_eigenvalues(const MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double lambda_min(const MatrixXd& h) { return symmetric_eigenvalues(h)(0); }

double symmetric_norm(const MatrixXd& h) {
  if (h.size() == 0) return 0.0;
  const VectorXd ev = symmetric_eigenvalues(h);
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n <= 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(n));
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
  out.back() = hi;
  return out;
}

namespace {
std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(master) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

VectorXd random_unit_vector(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(n);
  double norm = 0.0;
  while (norm < 1e-300) {
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace sepunmix
