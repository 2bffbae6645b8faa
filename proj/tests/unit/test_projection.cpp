#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tpgm/errors.hpp"
#include "tpgm/numerics.hpp"
#include "tpgm/projection.hpp"

using namespace tpgm;

namespace {

const ProjectionKind kKinds[] = {ProjectionKind::L2, ProjectionKind::Mars};

struct Case {
  Tensor theta0;
  Tensor theta_t;
  double gamma;
};

Case random_case(Rng& rng, std::size_t max_extent) {
  const Tensor theta0 = testing::random_tensor(rng, max_extent);
  const Tensor delta = testing::random_like(rng, theta0, std::pow(10.0, rng.uniform(-4.0, 4.0)));
  return {theta0, theta0 + delta, std::pow(10.0, rng.uniform(-5.0, 5.0))};
}

/// A smooth loss of the projected parameters: sum_i w_i * sin(theta_i) + 0.5 ||theta||^2.
struct SmoothLoss {
  Tensor w;
  double value(const Tensor& t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += w[i] * std::sin(t[i]) + 0.5 * t[i] * t[i];
    return s;
  }
  Tensor grad(const Tensor& t) const {
    Tensor g = Tensor::zeros_like(t);
    for (std::size_t i = 0; i < t.size(); ++i) g[i] = w[i] * std::cos(t[i]) + t[i];
    return g;
  }
};

}  // namespace

TEST_CASE("l2 projection example") {
  const Projection p = project(ProjectionKind::L2, Tensor::vector({0, 0}), Tensor::vector({3, 4}), 2.5);
  CHECK(p.theta == Tensor::vector({1.5, 2.0}));
  CHECK(p.alpha == 0.5);
  CHECK(p.nu == 5.0);
}

TEST_CASE("mars projection example") {
  const Projection p = project(ProjectionKind::Mars, Tensor::zeros_matrix(2, 2),
                               Tensor::matrix({{1, 2}, {-3, 0}}), 1.5);
  CHECK(p.theta == Tensor::matrix({{0.5, 1}, {-1.5, 0}}));
  CHECK(p.alpha == 0.5);
}

TEST_CASE("zero difference projects to theta0") {
  for (ProjectionKind k : kKinds) {
    const Tensor t = Tensor::vector({1, -2});
    for (double gamma : {0.0, 1.0, 1e9}) {
      const Projection p = project(k, t, t, gamma);
      CHECK(p.theta == t);
      CHECK(p.alpha == 1.0);
    }
  }
}

TEST_CASE("invalid projection inputs") {
  const Tensor a = Tensor::vector({1, 2});
  CHECK_THROWS_AS(project(ProjectionKind::L2, a, Tensor::vector({1, 2, 3}), 1.0), ShapeError);
  CHECK_THROWS_AS(project(ProjectionKind::L2, a, a, -1.0), ContractError);
  CHECK_THROWS_AS(project(ProjectionKind::L2, a, Tensor::vector({1, std::nan("")}), 1.0), NumericDomainError);
}

TEST_CASE("projection properties under fuzzing") {
  Rng rng(1234);
  for (int k = 0; k < 4000; ++k) {
    const Case c = random_case(rng, 16);
    for (ProjectionKind kind : kKinds) {
      const Projection p = project(kind, c.theta0, c.theta_t, c.gamma);
      const double dist = constraint_norm(kind, p.theta - c.theta0);
      CHECK(dist <= c.gamma * (1 + 1e-12) + 1e-15);
      CHECK(p.alpha >= 0.0);
      CHECK(p.alpha <= 1.0);
      if (p.nu <= c.gamma) {
        CHECK(p.theta == c.theta_t);
        CHECK(p.alpha == 1.0);
      } else {
        CHECK(p.alpha < 1.0);
      }
      const Projection again = project(kind, c.theta0, p.theta, c.gamma);
      CHECK(again.theta == p.theta);
    }
  }
}

TEST_CASE("projected distance is nondecreasing in gamma") {
  Rng rng(55);
  for (int k = 0; k < 200; ++k) {
    const Case c = random_case(rng, 8);
    for (ProjectionKind kind : kKinds) {
      const double nu = constraint_norm(kind, c.theta_t - c.theta0);
      double prev = -1.0;
      for (int i = 0; i <= 50; ++i) {
        const double gamma = nu * i / 50.0;
        const double d = constraint_norm(kind, project(kind, c.theta0, c.theta_t, gamma).theta - c.theta0);
        CHECK(d >= prev);
        prev = d;
      }
    }
  }
}

TEST_CASE("gamma gradient example") {
  const Tensor t0 = Tensor::vector({0, 0});
  const Tensor tt = Tensor::vector({3, 4});
  CHECK(gamma_gradient(ProjectionKind::L2, t0, tt, 2.5, Tensor::vector({1, 0})) == doctest::Approx(0.6));
  CHECK(gamma_gradient(ProjectionKind::L2, t0, tt, 6.0, Tensor::vector({1, 0})) == 0.0);
  CHECK(gamma_gradient(ProjectionKind::L2, t0, t0, 1.0, Tensor::vector({1, 0})) == 0.0);
  CHECK(alpha_gradient(2.5, 5.0) == 0.2);
  CHECK(alpha_gradient(6.0, 5.0) == 0.0);
  CHECK(alpha_gradient(1.0, 0.0) == 0.0);
}

TEST_CASE("gamma gradient matches central differences") {
  Rng rng(99);
  int checked = 0;
  while (checked < 500) {
    const Tensor theta0 = testing::random_like(rng, testing::random_tensor(rng, 6));
    const Tensor theta_t = theta0 + testing::random_like(rng, theta0);
    for (ProjectionKind kind : kKinds) {
      const double nu = constraint_norm(kind, theta_t - theta0);
      const double gamma = rng.uniform(0.0, 2.0) * nu;
      if (std::abs(nu - gamma) <= 1e-3 * nu || gamma < 1e-4) continue;
      const SmoothLoss loss{testing::random_like(rng, theta0)};
      const Tensor up = loss.grad(project(kind, theta0, theta_t, gamma).theta);
      const double analytic = gamma_gradient(kind, theta0, theta_t, gamma, up);
      const double h = 1e-5;
      const double fd = testing::central_difference(
          [&](double g) { return loss.value(project(kind, theta0, theta_t, g).theta); }, gamma, h);
      CHECK(testing::fd_agrees(analytic, fd, loss.value(theta_t), h));
      ++checked;
    }
  }
}

TEST_CASE("project_all with extreme radii") {
  Rng rng(3);
  Model m = Model::mlp({3, 4, 2}, Activation::Tanh, rng);
  ModelTriple triple;
  triple.pretrained = snapshot(m);
  for (auto& g : m.groups()) g.tensor += testing::random_like(rng, g.tensor);
  triple.current = snapshot(m);

  for (ProjectionKind kind : kKinds) {
    RadiusVector huge(triple.pretrained, 1e12);
    project_all(kind, triple, huge);
    for (std::size_t i = 0; i < triple.current.size(); ++i) CHECK(triple.projected[i].tensor == triple.current[i].tensor);

    RadiusVector zero(triple.pretrained, 0.0);
    project_all(kind, triple, zero);
    for (std::size_t i = 0; i < triple.current.size(); ++i) CHECK(triple.projected[i].tensor == triple.pretrained[i].tensor);

    RadiusVector mixed(triple.pretrained, 0.0);
    for (std::size_t i = 0; i < mixed.size(); ++i) mixed.set(i, rng.uniform(0.0, 2.0));
    const ProjectAllResult info = project_all(kind, triple, mixed);
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      CHECK(info.distances[i] <= mixed[i] * (1 + 1e-12) + 1e-15);
      CHECK(constraint_norm(kind, triple.projected[i].tensor - triple.pretrained[i].tensor) == info.distances[i]);
    }
  }
}

TEST_CASE("radius vector") {
  Rng rng(3);
  const Model m = Model::mlp({2, 3, 1}, Activation::Tanh, rng);
  const ModelSnapshot snap = snapshot(m);
  RadiusVector r(snap, 1e-8);
  REQUIRE(r.size() == 4);
  CHECK(r.names()[0] == "layer0.weight");
  r.step({1.0, -1.0, 0.0, 1.0});
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(1e-2 + 1e-8).epsilon(1e-6));
  CHECK(r[2] == 1e-8);
  CHECK_THROWS_AS(r.step({1.0}), ContractError);
  CHECK_THROWS_AS(r.set(0, -1.0), ContractError);
  CHECK_THROWS_AS(RadiusVector(snap, -1.0), ContractError);

  const Model other = Model::linear(3);
  CHECK_THROWS_AS(r.check_alignment(snapshot(other)), ContractError);
}
