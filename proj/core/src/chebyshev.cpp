#include "firn/chebyshev.hpp"

#include <cmath>

#include "firn/error.hpp"

namespace firn {

double power_iteration_lambda_max(const Matrix& m, double tolerance, int max_iterations) {
  const auto n = m.rows();
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
  v.normalize();

  double lambda = 0.0;
  Vector w(n);
  for (int it = 0; it < max_iterations; ++it) {
    w.noalias() = m * v;
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    // Residual of the Rayleigh pair bounds the eigenvalue error.
    const double residual = (w - next * v).norm();
    lambda = next;
    v = w / norm;
    if (residual <= tolerance * std::abs(next)) break;
  }
  return lambda;
}

ScaledLaplacian scaled_laplacian(const Matrix& adjacency) {
  const auto n = adjacency.rows();
  if (adjacency.cols() != n) throw Error(ErrorKind::ShapeMismatch, "adjacency must be square");
  const Vector degree = adjacency.rowwise().sum();
  if (!(degree.maxCoeff() > 0.0)) throw Error(ErrorKind::ZeroGraph, "every edge weight is zero");

  Vector inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;

  Matrix lsym = -(inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal());
  lsym.diagonal().array() += 1.0;
  // Restore exact symmetry lost to rounding in the diagonal scaling.
  lsym = 0.5 * (lsym + lsym.transpose()).eval();

  ScaledLaplacian out;
  out.lambda_max = power_iteration_lambda_max(lsym);
  out.matrix = (2.0 / out.lambda_max) * lsym;
  out.matrix.diagonal().array() -= 1.0;
  return out;
}

Matrix chebyshev_basis(const Matrix* laplacian, const Matrix& x, int order) {
  if (order < 1) throw Error(ErrorKind::ShapeMismatch, "Chebyshev order must be at least 1");
  const auto n = x.rows();
  const auto c = x.cols();
  if (order > 1) {
    if (laplacian == nullptr) throw Error(ErrorKind::ShapeMismatch, "Chebyshev order > 1 needs a Laplacian");
    if (laplacian->rows() != n || laplacian->cols() != n)
      throw Error(ErrorKind::ShapeMismatch, "Laplacian is " + std::to_string(laplacian->rows()) + "x" +
                                                std::to_string(laplacian->cols()) + " but features have " +
                                                std::to_string(n) + " rows");
  }
  Matrix z(n, order * c);
  z.leftCols(c) = x;
  if (order > 1) z.middleCols(c, c).noalias() = *laplacian * x;
  for (int k = 2; k < order; ++k) {
    z.middleCols(k * c, c).noalias() = 2.0 * (*laplacian) * z.middleCols((k - 1) * c, c);
    z.middleCols(k * c, c) -= z.middleCols((k - 2) * c, c);
  }
  return z;
}

Matrix chebyshev_basis_adjoint(const Matrix* laplacian, const Matrix& d_basis, int order) {
  const auto c = d_basis.cols() / order;
  // Walk the recurrence backwards; block k holds the adjoint of T_k X.
  Matrix adj = d_basis;
  for (int k = order - 1; k >= 2; --k) {
    adj.middleCols((k - 1) * c, c).noalias() += 2.0 * (*laplacian) * adj.middleCols(k * c, c);
    adj.middleCols((k - 2) * c, c) -= adj.middleCols(k * c, c);
  }
  Matrix dx = adj.leftCols(c);
  if (order > 1) dx.noalias() += *laplacian * adj.middleCols(c, c);
  return dx;
}

Matrix cheb_conv(const Matrix& x, const Matrix& laplacian, const ChebFilter& filter) {
  const int order = filter.order();
  if (order < 1) throw Error(ErrorKind::ShapeMismatch, "empty Chebyshev filter");
  const auto c = x.cols();
  const auto out = filter.theta.front().cols();
  Matrix stacked(order * c, out);
  for (int k = 0; k < order; ++k) {
    const auto& t = filter.theta[static_cast<std::size_t>(k)];
    if (t.rows() != c || t.cols() != out)
      throw Error(ErrorKind::ShapeMismatch, "filter " + std::to_string(k) + " is " + std::to_string(t.rows()) +
                                                "x" + std::to_string(t.cols()) + ", expected " +
                                                std::to_string(c) + "x" + std::to_string(out));
    stacked.middleRows(k * c, c) = t;
  }
  return chebyshev_basis(&laplacian, x, order) * stacked;
}

}  // namespace firn
