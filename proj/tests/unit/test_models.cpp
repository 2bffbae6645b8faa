#include <doctest.h>

#include <sstream>

#include "test_support.hpp"
#include "tpgm/errors.hpp"
#include "tpgm/models.hpp"
#include "tpgm/numerics.hpp"
#include "tpgm/theory.hpp"

using namespace tpgm;

namespace {

Batch regression_batch(Tensor inputs, Tensor targets) {
  Batch b;
  b.inputs = std::move(inputs);
  b.targets = std::move(targets);
  return b;
}

}  // namespace

TEST_CASE("linear forward") {
  Model m = Model::linear(2);
  m.groups()[0].tensor = Tensor::vector({1, 2});
  const Tensor out = m.forward(Tensor::matrix({{3, 4}}));
  CHECK(out(0, 0) == 11.0);

  const Model zero = Model::zeros_like(m);
  CHECK(zero.forward(Tensor::matrix({{3, 4}}))(0, 0) == 0.0);
}

TEST_CASE("identity single-layer mlp matches the linear model") {
  Rng rng(4);
  Model mlp = Model::mlp({3, 1}, Activation::Identity, rng);
  Model lin = Model::linear(3);
  lin.groups()[0].tensor = Tensor::vector(mlp.groups()[0].tensor.values());
  const Tensor x = rng.normal_matrix(5, 3);
  const Tensor a = mlp.forward(x);
  const Tensor b = lin.forward(x);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a(i, 0) == doctest::Approx(b(i, 0)).epsilon(1e-15));
}

TEST_CASE("block linear model splits features") {
  Model m = Model::linear_blocks({2, 1});
  REQUIRE(m.group_count() == 2);
  CHECK(m.groups()[0].name == "theta.0");
  CHECK(m.groups()[1].layer_index == 1);
  m.groups()[0].tensor = Tensor::vector({1, 1});
  m.groups()[1].tensor = Tensor::vector({10});
  CHECK(m.forward(Tensor::matrix({{1, 2, 3}}))(0, 0) == 33.0);
}

TEST_CASE("mse on a one-sample linear model") {
  Model m = Model::linear(1);
  m.groups()[0].tensor = Tensor::vector({1});
  const LossAndGrads lg =
      loss_and_grads(m, regression_batch(Tensor::matrix({{2}}), Tensor::matrix({{0}})), LossKind::Mse);
  CHECK(lg.loss == 4.0);
  CHECK(lg.grads[0][0] == 8.0);
}

TEST_CASE("global minimum has zero loss and zero gradient") {
  Rng rng(8);
  const Tensor theta = rng.normal_vector(4);
  Model m = Model::linear(4);
  m.groups()[0].tensor = theta;
  const Tensor x = rng.normal_matrix(6, 4);
  const Batch b = regression_batch(x, m.forward(x));
  for (LossKind k : {LossKind::Mse, LossKind::L2Residual}) {
    const LossAndGrads lg = loss_and_grads(m, b, k);
    CHECK(lg.loss == 0.0);
    CHECK(l2_norm(lg.grads[0]) == 0.0);
  }
}

TEST_CASE("gradients match central differences for every loss") {
  Rng rng(2718);
  for (LossKind loss : {LossKind::Mse, LossKind::SoftmaxCe, LossKind::L2Residual}) {
    for (int trial = 0; trial < 40; ++trial) {
      testing::ModelCase c = testing::random_mlp_case(rng, loss);
      CHECK(testing::fd_mismatches(c.model, c.batch, loss, 1e-6) == 0);
    }
  }
}

TEST_CASE("l2 residual on the theory training set is solved exactly") {
  const theory::LinearProblem p = theory::gen_problem(12, 5, 0.7, 3);
  Model m = Model::linear(12);
  m.groups()[0].tensor = p.min_norm;
  const Batch b = regression_batch(transpose(p.x_train), Tensor::matrix(5, 1, p.y_train.values()));
  CHECK(evaluate_loss(m, b, LossKind::L2Residual) < 1e-8);
}

TEST_CASE("forward and gradients are pure") {
  Rng rng(12);
  testing::ModelCase c = testing::random_mlp_case(rng, LossKind::Mse);
  const LossAndGrads a = loss_and_grads(c.model, c.batch, LossKind::Mse);
  const LossAndGrads b = loss_and_grads(c.model, c.batch, LossKind::Mse);
  CHECK(a.loss == b.loss);
  for (std::size_t g = 0; g < a.grads.size(); ++g) CHECK(a.grads[g] == b.grads[g]);
}

TEST_CASE("accuracy counts argmax hits") {
  Model m = Model::linear(1);
  Rng rng(1);
  Model clf = Model::mlp({2, 2}, Activation::Identity, rng);
  clf.groups()[0].tensor = Tensor::matrix({{1, 0}, {0, 1}});
  clf.groups()[1].tensor = Tensor::vector({0, 0});
  Batch b;
  b.inputs = Tensor::matrix({{1, 0}, {0, 1}, {2, 1}, {0, 3}});
  b.labels = {0, 1, 1, 1};
  CHECK(accuracy(clf, b) == 0.75);
}

TEST_CASE("snapshot and restore") {
  Rng rng(6);
  Model m = Model::mlp({3, 4, 2}, Activation::Tanh, rng);
  const Tensor x = rng.normal_matrix(5, 3);
  const Tensor before = m.forward(x);
  const ModelSnapshot snap = snapshot(m);

  m.groups()[0].tensor[0] += 1.0;
  CHECK(snap[0].tensor != m.groups()[0].tensor);
  restore(m, snap);
  CHECK(m.forward(x) == before);

  Model other = Model::mlp({3, 5, 2}, Activation::Tanh, rng);
  CHECK_THROWS_AS(restore(other, snap), ContractError);
}

TEST_CASE("model files round-trip bit-exactly") {
  Rng rng(19);
  const Model m = Model::mlp({4, 6, 3}, Activation::Tanh, rng, {0, 0});
  std::stringstream buf;
  save_model(buf, m);
  const Model back = load_model(buf);
  CHECK(back.same_architecture(m));
  for (std::size_t g = 0; g < m.group_count(); ++g) {
    CHECK(back.groups()[g].tensor == m.groups()[g].tensor);
    CHECK(back.groups()[g].name == m.groups()[g].name);
    CHECK(back.groups()[g].block_id == 0);
  }

  const Model lin = Model::linear_blocks({2, 3});
  std::stringstream buf2;
  save_model(buf2, lin);
  CHECK(load_model(buf2).same_architecture(lin));
}

TEST_CASE("corrupt model files are rejected") {
  Rng rng(19);
  const Model m = Model::mlp({2, 2}, Activation::Tanh, rng);
  std::stringstream buf;
  save_model(buf, m);
  const std::string bytes = buf.str();

  std::stringstream bad_magic(std::string("XXXXXXXX") + bytes.substr(8));
  CHECK_THROWS_AS(load_model(bad_magic), ContractError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_model(truncated), ContractError);
}

TEST_CASE("batches are validated") {
  Batch b;
  b.inputs = Tensor::matrix({{1, 2}, {3, 4}});
  b.targets = Tensor::matrix({{1}});
  CHECK_THROWS_AS(b.validate(), ContractError);
  Model m = Model::linear(2);
  CHECK_THROWS(loss_and_grads(m, b, LossKind::Mse));
}
