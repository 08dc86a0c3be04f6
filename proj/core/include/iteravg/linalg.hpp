#pragma once

#include "iteravg/common.hpp"

namespace iteravg {

/// Eigenpairs of a symmetric matrix, eigenvalues ascending,
/// eigenvectors in the matching columns.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};

/// Cyclic Jacobi rotations. Accurate for the small Gram matrices used in the
/// kernel problems; O(n^3) per sweep so keep n modest.
SymmetricEigen jacobi_eigen(const Matrix& a, double tol = 1e-15, int max_sweeps = 64);

/// Extreme eigenvalues of a symmetric matrix (Eigen's tridiagonal QR).
double min_eigenvalue(const Matrix& a);
double max_eigenvalue(const Matrix& a);

bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

/// Largest singular value.
double spectral_norm(const Matrix& a);

}  // namespace iteravg
