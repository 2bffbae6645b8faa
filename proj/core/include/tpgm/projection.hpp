#pragma once

#include <string>
#include <vector>

#include "tpgm/models.hpp"
#include "tpgm/optim.hpp"
#include "tpgm/tensor.hpp"

namespace tpgm {

enum class ProjectionKind { L2, Mars };

/// l2_norm for L2, mars_norm for MARS.
double constraint_norm(ProjectionKind kind, const Tensor& t);

struct Projection {
  Tensor theta;        // projected parameters
  double alpha = 1.0;  // scale applied to (theta_t - theta0), in [0, 1]
  double nu = 0.0;     // constraint norm of (theta_t - theta0) before projection
};

/// Scale theta_t - theta0 so its constraint norm is at most gamma.
///
/// alpha = min(1, gamma / nu), with alpha = 1 when nu = 0. Inside the ball the
/// input is returned unchanged. Outside, the rounded result is checked and
/// alpha is shrunk by a few ulps when needed so that the constraint holds in
/// floating point, not just in exact arithmetic.
Projection project(ProjectionKind kind, const Tensor& theta0, const Tensor& theta_t, double gamma);

/// d/dgamma of L(project(theta0, theta_t, gamma)) given upstream = dL/dtheta~.
/// Zero when the constraint is inactive (nu <= gamma) or nu = 0; otherwise
/// <upstream, (theta_t - theta0)> / nu.
double gamma_gradient(ProjectionKind kind, const Tensor& theta0, const Tensor& theta_t,
                      double gamma, const Tensor& upstream);

/// d alpha / d gamma for alpha = min(1, gamma / nu); zero on the inactive side.
double alpha_gradient(double gamma, double nu);

/// Pre-trained, raw fine-tuned and projected parameters, group-aligned.
struct ModelTriple {
  ModelSnapshot pretrained;
  ModelSnapshot current;
  ModelSnapshot projected;
};

/// One trainable radius per parameter group plus the optimizer that moves it.
class RadiusVector {
 public:
  static constexpr double kDefaultLearningRate = 1e-2;

  RadiusVector(const ModelSnapshot& groups, double initial_radius,
               OptimizerSettings settings = {OptimizerKind::Adam, kDefaultLearningRate});

  std::size_t size() const { return radii_.size(); }
  double operator[](std::size_t i) const { return radii_[i]; }
  const Tensor& values() const { return radii_; }
  const std::vector<std::string>& names() const { return names_; }
  const Optimizer& optimizer() const { return optimizer_; }

  void set(std::size_t i, double value);
  /// One optimizer step on the radii, then clamp to [0, inf).
  void step(const std::vector<double>& grads);
  /// Drop optimizer moments and the step counter.
  void reset_optimizer() { optimizer_.reset(); }
  /// Throws ContractError unless names match the groups one to one, in order.
  void check_alignment(const ModelSnapshot& groups) const;

 private:
  std::vector<std::string> names_;
  Tensor radii_;
  Optimizer optimizer_;
};

struct ProjectAllResult {
  std::vector<double> alphas;
  std::vector<double> nus;        // distance before projection
  std::vector<double> distances;  // distance after projection
};

/// Projects triple.current onto the radii around triple.pretrained, writing
/// triple.projected group by group.
ProjectAllResult project_all(ProjectionKind kind, ModelTriple& triple, const RadiusVector& radii);

/// Same, reading the raw parameters from a snapshot and returning the projected ones.
ModelSnapshot project_groups(ProjectionKind kind, const ModelSnapshot& pretrained,
                             const ModelSnapshot& current, const RadiusVector& radii,
                             ProjectAllResult* info = nullptr);

}  // namespace tpgm
