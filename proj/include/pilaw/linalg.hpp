#pragma once

#include <span>
#include <vector>

#include "pilaw/matrix.hpp"

namespace pilaw::linalg {

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `tolerance` (relative to the matrix norm once that exceeds one).
/// Eigenvector signs are fixed so the largest-magnitude component is positive.
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-12, int max_sweeps = 100);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// Modified Gram-Schmidt over the rows. Throws DegenerateBasis when a row is
/// (numerically) in the span of the previous ones.
Matrix orthonormal_rows(const Matrix& rows, double tolerance = 1e-10);

/// Floating reduced row echelon form with partial pivoting; pivots scaled to 1
/// and entries below `tolerance` cleared.
Matrix rref(Matrix m, double tolerance = 1e-9);

/// Solves a square system by Gaussian elimination with partial pivoting.
std::vector<double> solve(Matrix a, std::vector<double> b);

}  // namespace pilaw::linalg
