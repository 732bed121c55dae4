#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace sepunmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Singular values in descending order. Tall inputs are reduced by a thin QR
/// first so the cost is O(rows * cols^2).
VectorXd singular_values(const MatrixXd& m);

/// Largest singular value (operator 2-norm).
double spectral_norm(const MatrixXd& m);

/// Ratio of largest to smallest singular value; +inf for rank-deficient input.
double condition_number(const MatrixXd& m);

/// Eigenvalues of a symmetric matrix, ascending. Only the lower triangle is read.
VectorXd symmetric_eigenvalues(const MatrixXd& h);

double lambda_min(const MatrixXd& h);

/// Spectral norm of a symmetric matrix, max |eigenvalue|.
double symmetric_norm(const MatrixXd& h);

/// n equally spaced points from lo to hi inclusive (n >= 2), or {lo} for n == 1.
std::vector<double> linspace(double lo, double hi, int n);

/// Deterministic 64-bit seed derived from a master seed and two stream indices.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

using Rng = std::mt19937_64;

/// Uniformly distributed point on the unit sphere of R^n.
VectorXd random_unit_vector(int n, Rng& rng);

}  // namespace sepunmix
