#include "tpgm/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tpgm/errors.hpp"
#include "tpgm/numerics.hpp"

namespace tpgm {

namespace {

constexpr int kMaxShrinkIterations = 64;

void check_gamma(double gamma) {
  if (std::isnan(gamma) || gamma < 0.0) {
    throw ContractError("projection radius must be >= 0, got " + std::to_string(gamma));
  }
}

Tensor scaled_step(const Tensor& theta0, const Tensor& delta, double alpha) {
  Tensor out = theta0;
  auto o = out.data();
  auto d = delta.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += alpha * d[i];
  return out;
}

}  // namespace

double constraint_norm(ProjectionKind kind, const Tensor& t) {
  return kind == ProjectionKind::L2 ? l2_norm(t) : mars_norm(t);
}

Projection project(ProjectionKind kind, const Tensor& theta0, const Tensor& theta_t, double gamma) {
  require_same_shape(theta0, theta_t, "project");
  check_gamma(gamma);
  const Tensor delta = theta_t - theta0;
  const double nu = constraint_norm(kind, delta);
  if (nu <= gamma) return Projection{theta_t, 1.0, nu};

  double alpha = gamma / nu;
  Tensor theta = scaled_step(theta0, delta, alpha);
  // Rounding of theta0 + alpha * delta can exceed gamma; the margin doubles
  // each round so coarse rounding granularity is reached quickly.
  double margin = 4.0 * std::numeric_limits<double>::epsilon();
  for (int it = 0; it < kMaxShrinkIterations; ++it) {
    const double achieved = constraint_norm(kind, theta - theta0);
    if (achieved <= gamma) return Projection{std::move(theta), alpha, nu};
    alpha *= std::min(1.0, gamma / achieved) * (1.0 - margin);
    margin = std::min(0.5, 2.0 * margin);
    theta = scaled_step(theta0, delta, alpha);
  }
  // gamma is below the rounding granularity of theta0.
  return Projection{theta0, 0.0, nu};
}

double gamma_gradient(ProjectionKind kind, const Tensor& theta0, const Tensor& theta_t,
                      double gamma, const Tensor& upstream) {
  require_same_shape(theta0, theta_t, "gamma_gradient");
  require_same_shape(theta0, upstream, "gamma_gradient upstream");
  check_gamma(gamma);
  const Tensor delta = theta_t - theta0;
  const double nu = constraint_norm(kind, delta);
  if (nu == 0.0 || nu <= gamma) return 0.0;
  return dot(upstream, delta) / nu;
}

double alpha_gradient(double gamma, double nu) {
  if (nu == 0.0 || nu <= gamma) return 0.0;
  return 1.0 / nu;
}

RadiusVector::RadiusVector(const ModelSnapshot& groups, double initial_radius,
                           OptimizerSettings settings)
    : radii_(Tensor::zeros_vector(groups.size())), optimizer_(settings) {
  check_gamma(initial_radius);
  names_.reserve(groups.size());
  for (const auto& g : groups) names_.push_back(g.name);
  for (std::size_t i = 0; i < radii_.size(); ++i) radii_[i] = initial_radius;
}

void RadiusVector::set(std::size_t i, double value) {
  check_gamma(value);
  radii_[i] = value;
}

void RadiusVector::step(const std::vector<double>& grads) {
  if (grads.size() != radii_.size()) {
    throw ContractError("radius step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(radii_.size()) + " radii");
  }
  Tensor g = Tensor::vector(grads);
  if (!g.all_finite()) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        throw NumericDomainError("radius gradient for group " + names_[i] + " is not finite");
      }
    }
  }
  std::span<Tensor> params(&radii_, 1);
  std::span<const Tensor> gs(&g, 1);
  optimizer_.step(params, gs);
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    if (!(radii_[i] >= 0.0)) radii_[i] = 0.0;
  }
}

void RadiusVector::check_alignment(const ModelSnapshot& groups) const {
  if (groups.size() != names_.size()) {
    throw ContractError("radius vector has " + std::to_string(names_.size()) +
                        " entries for " + std::to_string(groups.size()) + " groups");
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].name != names_[i]) {
      throw ContractError("radius '" + names_[i] + "' not aligned with group '" +
                          groups[i].name + "'");
    }
  }
}

ModelSnapshot project_groups(ProjectionKind kind, const ModelSnapshot& pretrained,
                             const ModelSnapshot& current, const RadiusVector& radii,
                             ProjectAllResult* info) {
  if (pretrained.size() != current.size()) {
    throw ContractError("project_all: pre-trained and current group counts differ");
  }
  radii.check_alignment(pretrained);
  radii.check_alignment(current);
  ModelSnapshot out = current;
  if (info) *info = ProjectAllResult{};
  for (std::size_t i = 0; i < current.size(); ++i) {
    Projection p = project(kind, pretrained[i].tensor, current[i].tensor, radii[i]);
    if (info) {
      info->alphas.push_back(p.alpha);
      info->nus.push_back(p.nu);
      info->distances.push_back(constraint_norm(kind, p.theta - pretrained[i].tensor));
    }
    out[i].tensor = std::move(p.theta);
  }
  return out;
}

ProjectAllResult project_all(ProjectionKind kind, ModelTriple& triple, const RadiusVector& radii) {
  ProjectAllResult info;
  triple.projected = project_groups(kind, triple.pretrained, triple.current, radii, &info);
  return info;
}

}  // namespace tpgm
