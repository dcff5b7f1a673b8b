#pragma once

#include <vector>

#include "firn/types.hpp"

namespace firn {

/// (2 / lambda_max) * L_sym - I for L_sym = I - D^-1/2 A D^-1/2.
struct ScaledLaplacian {
  Matrix matrix;
  double lambda_max = 0.0;
};

inline constexpr double kPowerIterationTolerance = 1e-6;
inline constexpr int kPowerIterationLimit = 10000;

/// Requires a symmetric, nonnegative adjacency with zero diagonal. Nodes with
/// zero degree are treated as isolated. Throws ZeroGraph when every weight is 0.
ScaledLaplacian scaled_laplacian(const Matrix& adjacency);

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
double power_iteration_lambda_max(const Matrix& m, double tolerance = kPowerIterationTolerance,
                                  int max_iterations = kPowerIterationLimit);

/// One weight matrix [in x out] per Chebyshev order.
struct ChebFilter {
  std::vector<Matrix> theta;

  int order() const { return static_cast<int>(theta.size()); }
};

/// [T_0(L) X | T_1(L) X | ... | T_{K-1}(L) X], an N x K*C matrix. A null
/// Laplacian is only valid for K = 1.
Matrix chebyshev_basis(const Matrix* laplacian, const Matrix& x, int order);

/// Adjoint of chebyshev_basis for a symmetric Laplacian: maps the gradient of
/// the stacked basis back to the gradient of X.
Matrix chebyshev_basis_adjoint(const Matrix* laplacian, const Matrix& d_basis, int order);

/// Y = sum_k T_k(L) X Theta_k.
Matrix cheb_conv(const Matrix& x, const Matrix& laplacian, const ChebFilter& filter);

}  // namespace firn
