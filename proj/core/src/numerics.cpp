#include "tpgm/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "tpgm/errors.hpp"

namespace tpgm {

namespace {

// Rotation threshold for the one-sided Jacobi sweeps. Pairs whose normalized
// inner product is below this are treated as orthogonal; a sweep with no
// rotation terminates the iteration.
constexpr double kJacobiTolerance = 1e-15;
constexpr int kMaxSweeps = 80;
constexpr double kRankTolerance = 1e-12;

double column_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void rotate(std::vector<double>& p, std::vector<double>& q, double c, double s) {
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double a = p[k];
    const double b = q[k];
    p[k] = c * a - s * b;
    q[k] = s * a + c * b;
  }
}

}  // namespace

double l2_norm(const Tensor& t) {
  require_finite(t, "l2_norm");
  // Scaled accumulation avoids overflow for large entries.
  double scale = 0.0;
  for (double v : t.data()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double ssq = 0.0;
  for (double v : t.data()) {
    const double r = v / scale;
    ssq += r * r;
  }
  return scale * std::sqrt(ssq);
}

double mars_norm(const Tensor& t) {
  require_finite(t, "mars_norm");
  double best = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) row_sum += std::abs(t(r, c));
    best = std::max(best, row_sum);
  }
  return best;
}

SvdFactors thin_svd(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("thin_svd: expected a matrix, got " + x.shape_string());
  require_finite(x, "thin_svd");
  const std::size_t d = x.rows();
  const std::size_t n = x.cols();
  if (n == 0 || n > d) {
    throw ShapeError("thin_svd: need 1 <= n <= d, got " + x.shape_string());
  }

  std::vector<std::vector<double>> a(n, std::vector<double>(d));
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < d; ++i) a[j][i] = x(i, j);
    v[j][j] = 1.0;
  }

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = column_dot(a[p], a[p]);
        const double beta = column_dot(a[q], a[q]);
        const double gamma = column_dot(a[p], a[q]);
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(a[p], a[q], c, s);
        rotate(v[p], v[q], c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(column_dot(a[j], a[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return sigma[l] > sigma[r]; });

  const double smax = sigma[order.front()];
  const double smin = sigma[order.back()];
  if (!(smax > 0.0) || smin <= kRankTolerance * smax) {
    std::ostringstream os;
    os << "thin_svd: rank deficient input, singular value " << smin << " <= 1e-12 * " << smax;
    throw DegenerateInputError(os.str());
  }

  SvdFactors f{Tensor::zeros_matrix(d, n), Tensor::zeros_matrix(n, n), Tensor::zeros_matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    f.Sigma(k, k) = sigma[j];
    for (std::size_t i = 0; i < d; ++i) f.U(i, k) = a[j][i] / sigma[j];
    for (std::size_t i = 0; i < n; ++i) f.V(i, k) = v[j][i];
  }
  return f;
}

Tensor reconstruct(const SvdFactors& f) {
  Tensor us = f.U;
  for (std::size_t i = 0; i < us.rows(); ++i) {
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= f.Sigma(k, k);
  }
  return matmul(us, transpose(f.V));
}

Tensor min_norm_solution(const SvdFactors& f, const Tensor& y) {
  if (y.size() != f.V.rows()) {
    throw ShapeError("min_norm_solution: label length " + std::to_string(y.size()) +
                     " does not match n = " + std::to_string(f.V.rows()));
  }
  require_finite(y, "min_norm_solution");
  Tensor coeff = matvec_transposed(f.V, y);
  for (std::size_t k = 0; k < coeff.size(); ++k) coeff[k] /= f.Sigma(k, k);
  return matvec(f.U, coeff);
}

Tensor min_norm_solution(const Tensor& x, const Tensor& y) {
  return min_norm_solution(thin_svd(x), y);
}

Tensor out_of_span_residual(const Tensor& x, const SvdFactors& f) {
  if (x.size() != f.U.rows()) {
    throw ShapeError("out_of_span_residual: vector length " + std::to_string(x.size()) +
                     " does not match d = " + std::to_string(f.U.rows()));
  }
  Tensor tau = matvec_transposed(f.U, Tensor::vector(x.values()));
  Tensor r = Tensor::vector(x.values());
  r -= matvec(f.U, tau);
  return r;
}

ComplementaryCoords complementary_coords(const Tensor& x, const SvdFactors& f) {
  if (x.size() != f.U.rows()) {
    throw ShapeError("complementary_coords: vector length " + std::to_string(x.size()) +
                     " does not match d = " + std::to_string(f.U.rows()));
  }
  const Tensor xv = Tensor::vector(x.values());
  ComplementaryCoords out;
  out.tau = matvec_transposed(f.U, xv);
  Tensor r = xv;
  r -= matvec(f.U, out.tau);
  out.tau_perp_norm = l2_norm(r);
  return out;
}

}  // namespace tpgm
