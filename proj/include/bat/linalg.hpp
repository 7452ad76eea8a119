#pragma once

#include <cstddef>

#include <Eigen/Dense>

// Dense kernels: Householder tridiagonalization with implicit QL for
// symmetric eigenproblems, one-sided (Hestenes) Jacobi for singular values.
namespace bat::linalg {

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column k pairs with values[k]
  int iterations = 0;  // QL iterations over all eigenvalues
};

/// Eigendecomposition of a symmetric matrix. Only the lower triangle is
/// read. Throws NumericalError if one eigenvalue needs more than
/// max_iter QL iterations.
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& a, int max_iter = 60);

/// Singular values of an arbitrary dense matrix, descending, length
/// min(rows, cols). Relative accuracy is preserved for small values.
Eigen::VectorXd singular_values(const Eigen::MatrixXd& m, int max_sweeps = 100);

/// Count of sigma_i > rel_tol * sigma_1 for descending values.
std::size_t numeric_rank(const Eigen::VectorXd& sigma, double rel_tol = 1e-8);

}  // namespace bat::linalg
