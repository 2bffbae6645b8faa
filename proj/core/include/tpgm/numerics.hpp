#pragma once

#include <cstddef>

#include "tpgm/tensor.hpp"

namespace tpgm {

/// Euclidean norm of the flattened tensor (Frobenius for matrices).
double l2_norm(const Tensor& t);

/// Maximum absolute row sum, max_j sum_i |A(j,i)|. A rank-1 tensor is read
/// as an n x 1 matrix, so its norm is the largest absolute entry.
double mars_norm(const Tensor& t);

/// Thin SVD x = U * Sigma * V^T of a d x n matrix with n <= d.
struct SvdFactors {
  Tensor U;      // d x n, orthonormal columns
  Tensor Sigma;  // n x n diagonal, nonincreasing positive entries
  Tensor V;      // n x n orthogonal

  std::size_t rank() const { return Sigma.rows(); }
  double singular_value(std::size_t i) const { return Sigma(i, i); }
};

/// One-sided (Hestenes) Jacobi SVD. Columns of x must be linearly independent:
/// the smallest singular value must exceed 1e-12 times the largest, otherwise
/// DegenerateInputError is thrown.
SvdFactors thin_svd(const Tensor& x);

/// U * Sigma * V^T.
Tensor reconstruct(const SvdFactors& f);

/// Minimum-norm solution of x^T theta = y, i.e. U Sigma^-1 V^T y.
Tensor min_norm_solution(const Tensor& x, const Tensor& y);
Tensor min_norm_solution(const SvdFactors& f, const Tensor& y);

/// Split x = U tau + (out-of-span residual). U_perp is never formed; only the
/// residual norm is returned.
struct ComplementaryCoords {
  Tensor tau;
  double tau_perp_norm = 0.0;
};

ComplementaryCoords complementary_coords(const Tensor& x, const SvdFactors& f);

/// x - U U^T x.
Tensor out_of_span_residual(const Tensor& x, const SvdFactors& f);

}  // namespace tpgm
