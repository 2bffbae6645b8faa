#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tpgm/models.hpp"
#include "tpgm/rng.hpp"
#include "tpgm/tensor.hpp"

namespace tpgm::testing {

/// Random tensor of rank 1 or 2 with extents in [1, max_extent]. Entries are
/// Gaussian with a log-uniform scale in [1e-3, 1e3].
inline Tensor random_tensor(Rng& rng, std::size_t max_extent) {
  const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
  const std::size_t rows = 1 + rng.below(max_extent);
  if (rng.below(2) == 0) return rng.normal_vector(rows, scale);
  return rng.normal_matrix(rows, 1 + rng.below(max_extent), scale);
}

inline Tensor random_like(Rng& rng, const Tensor& shape_of, double scale = 1.0) {
  Tensor t = Tensor::zeros_like(shape_of);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

/// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Relative agreement to `rel`, plus the rounding noise of a central
/// difference of a function of magnitude f_scale taken with step h.
inline bool fd_agrees(double analytic, double fd, double f_scale, double h, double rel = 1e-6) {
  const double noise = 8.0 * 2.220446049250313e-16 * std::max(1.0, std::abs(f_scale)) / h;
  return std::abs(analytic - fd) <= rel * std::max(std::abs(analytic), std::abs(fd)) + noise;
}

/// Small random MLP or linear model with a matching batch.
struct ModelCase {
  Model model;
  Batch batch;
};

inline ModelCase random_mlp_case(Rng& rng, LossKind loss) {
  const std::size_t in = 1 + rng.below(4);
  const std::size_t hidden = 1 + rng.below(5);
  const std::size_t out = loss == LossKind::SoftmaxCe ? 2 + rng.below(3) : 1 + rng.below(3);
  const std::size_t n = 1 + rng.below(6);
  std::vector<std::size_t> widths = {in, hidden};
  if (rng.below(2) == 1) widths.push_back(1 + rng.below(4));
  widths.push_back(out);
  Model m = Model::mlp(widths, rng.below(2) ? Activation::Tanh : Activation::Identity, rng);
  for (auto& g : m.groups()) {
    for (std::size_t i = 0; i < g.tensor.size(); ++i) g.tensor[i] = rng.normal();
  }
  Batch b;
  b.inputs = rng.normal_matrix(n, in);
  if (loss == LossKind::SoftmaxCe) {
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.below(out)));
  } else {
    b.targets = rng.normal_matrix(n, out);
  }
  return {std::move(m), std::move(b)};
}

/// Number of gradient entries that disagree with central differences.
inline int fd_mismatches(Model model, const Batch& batch, LossKind loss, double h) {
  const LossAndGrads lg = loss_and_grads(model, batch, loss);
  int bad = 0;
  for (std::size_t g = 0; g < model.group_count(); ++g) {
    for (std::size_t i = 0; i < model.groups()[g].tensor.size(); ++i) {
      double& p = model.groups()[g].tensor[i];
      const double saved = p;
      const double fd = central_difference(
          [&](double v) {
            p = v;
            return loss_and_grads(model, batch, loss).loss;
          },
          saved, h);
      p = saved;
      if (!fd_agrees(lg.grads[g][i], fd, lg.loss, h)) ++bad;
    }
  }
  return bad;
}

inline std::filesystem::path fresh_dir(const std::string& root, const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(root) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tpgm::testing
