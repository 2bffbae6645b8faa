#include "tpgm/rng.hpp"

#include <cmath>
#include <numeric>

#include "tpgm/numerics.hpp"

namespace tpgm {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * m;
  has_cached_ = true;
  return u * m;
}

std::size_t Rng::below(std::size_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t r = 0;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

Tensor Rng::normal_vector(std::size_t n, double scale) {
  Tensor t = Tensor::zeros_vector(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = scale * normal();
  return t;
}

Tensor Rng::normal_matrix(std::size_t rows, std::size_t cols, double scale) {
  Tensor t = Tensor::zeros_matrix(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * normal();
  return t;
}

Tensor Rng::unit_vector(std::size_t n) {
  Tensor t = normal_vector(n);
  double norm = l2_norm(t);
  while (norm == 0.0) {
    t = normal_vector(n);
    norm = l2_norm(t);
  }
  t *= 1.0 / norm;
  return t;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(p));
  return p;
}

}  // namespace tpgm
