#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "ulab/nn.hpp"

namespace ulab {
namespace {

using test::ScalarNet;

ModelState zero_model(std::vector<int> dims) {
  auto m = ModelState::init(std::move(dims), 1);
  for (auto& l : m.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return m;
}

TEST(NnForward, ZeroWeightsGiveUniformLogits) {
  const auto m = zero_model({4, 5, 10});
  const auto b = test::random_batch(3, 6, 4, 10);
  const Matrix logits = forward(m, b);
  EXPECT_TRUE((logits.array() == 0.0).all());
  EXPECT_NEAR(softmax_xent(logits, b.labels).loss, std::log(10.0), 1e-15);
}

TEST(NnForward, IdentityNetworkPassesInputThrough) {
  auto m = zero_model({3, 3, 3});
  m.activation = Activation::identity;
  for (auto& l : m.layers) l.weight.setIdentity();
  Matrix x(2, 3);
  x << 1.0, -2.0, 0.5, 0.0, 3.0, -1.0;
  EXPECT_EQ(forward(m, x), x);
}

TEST(NnForward, MatchesScalarOracle) {
  for (auto act : {Activation::relu, Activation::tanh}) {
    const auto m = ModelState::init({5, 7, 6, 4}, 11, act);
    const auto b = test::random_batch(12, 9, 5, 4);
    const Matrix logits = forward(m, b);
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      std::vector<double> x(5);
      for (int c = 0; c < 5; ++c) x[static_cast<std::size_t>(c)] = b.inputs(r, c);
      const auto z = ScalarNet::logits(m, x);
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(logits(r, c), z[static_cast<std::size_t>(c)], 1e-12);
    }
  }
}

TEST(NnLoss, HandComputedCrossEntropy) {
  Matrix logits(1, 3);
  logits << 1.0, 2.0, 3.0;
  EXPECT_NEAR(softmax_xent(logits, {2}).loss, 0.4076059644443804, 1e-15);
  EXPECT_NEAR(per_example_loss(logits, {2})(0), 0.4076059644443804, 1e-15);
}

TEST(NnLoss, LargeLogitsStayFinite) {
  Matrix logits(1, 2);
  logits << 1000.0, 0.0;
  const auto sx = softmax_xent(logits, {1});
  EXPECT_DOUBLE_EQ(sx.loss, 1000.0);
  EXPECT_TRUE(sx.probs.allFinite());
  EXPECT_DOUBLE_EQ(sx.probs(0, 0), 1.0);
}

TEST(NnLoss, RejectsBadLabels) {
  Matrix logits = Matrix::Zero(2, 3);
  EXPECT_THROW(softmax_xent(logits, {0, 3}), StructuralError);
  EXPECT_THROW(softmax_xent(logits, {0}), StructuralError);
  const auto m = ModelState::init({2, 3}, 1);
  EXPECT_THROW(backward(m, Batch{Matrix::Zero(1, 4), {0}}), StructuralError);
}

TEST(NnGradient, FiniteDifferencesTanh) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = ModelState::init({4, 6, 5, 3}, 100 + s, Activation::tanh);
    const auto check = test::gradient_check(m, test::random_batch(200 + s, 5, 4, 3));
    EXPECT_EQ(check.skipped, 0u);
    EXPECT_LE(check.max_weight_error, 1e-4) << "seed " << s;
    EXPECT_LE(check.max_input_error, 1e-4) << "seed " << s;
  }
}

TEST(NnGradient, FiniteDifferencesRelu) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = ModelState::init({4, 8, 3}, 300 + s, Activation::relu);
    const auto check = test::gradient_check(m, test::random_batch(400 + s, 5, 4, 3));
    EXPECT_GT(check.checked, 0u);
    EXPECT_LE(check.max_weight_error, 1e-4) << "seed " << s;
    EXPECT_LE(check.max_input_error, 1e-4) << "seed " << s;
  }
}

TEST(NnGradient, DuplicatedBatchGivesSameMeanGradient) {
  const auto m = ModelState::init({3, 5, 4}, 7, Activation::tanh);
  const auto b = test::random_batch(8, 4, 3, 4);
  Batch twice{Matrix(8, 3), b.labels};
  twice.inputs << b.inputs, b.inputs;
  twice.labels.insert(twice.labels.end(), b.labels.begin(), b.labels.end());
  const auto g1 = backward(m, b);
  const auto g2 = backward(m, twice);
  for (std::size_t l = 0; l < g1.size(); ++l) {
    EXPECT_LE((g1[l].weight - g2[l].weight).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((g1[l].bias - g2[l].bias).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(NnGradient, InputGradientsAreRowwise) {
  const auto m = ModelState::init({3, 5, 4}, 9, Activation::tanh);
  const auto b = test::random_batch(10, 3, 3, 4);
  const Matrix all = input_gradients(m, b);
  for (Eigen::Index r = 0; r < b.size(); ++r) {
    const Vector one = input_gradient(m, Batch{b.inputs.row(r), {b.labels[static_cast<std::size_t>(r)]}});
    EXPECT_LE((all.row(r).transpose() - one).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_THROW(input_gradient(m, b), StructuralError);
}

TEST(NnSgd, MomentumAndWeightDecayHandCase) {
  auto m = zero_model({1, 1});
  m.layers[0].weight(0, 0) = 1.0;
  Gradients g = zeros_like(m);
  g[0].weight(0, 0) = 0.5;
  const SgdParams p{.lr = 0.1, .momentum = 0.9, .weight_decay = 0.01};
  sgd_step(m, g, p);
  EXPECT_NEAR(m.momentum[0].weight(0, 0), 0.51, 1e-15);
  EXPECT_NEAR(m.layers[0].weight(0, 0), 0.949, 1e-15);
  sgd_step(m, g, p);
  EXPECT_NEAR(m.momentum[0].weight(0, 0), 0.96849, 1e-15);
  EXPECT_NEAR(m.layers[0].weight(0, 0), 0.852151, 1e-15);
  // bias had zero gradient and zero value: untouched
  EXPECT_EQ(m.layers[0].bias(0), 0.0);
}

TEST(NnSgd, L1TermUsesSign) {
  auto m = zero_model({2, 1});
  m.layers[0].weight << 2.0, -3.0;
  const auto g = zeros_like(m);
  sgd_step(m, g, SgdParams{.lr = 0.5, .l1_gamma = 0.1});
  EXPECT_DOUBLE_EQ(m.layers[0].weight(0, 0), 1.95);
  EXPECT_DOUBLE_EQ(m.layers[0].weight(0, 1), -2.95);
  EXPECT_EQ(m.layers[0].bias(0), 0.0);
}

TEST(NnSgd, AllFalseMaskLeavesModelUntouched) {
  auto m = ModelState::init({3, 4, 2}, 5);
  const auto before = m;
  const auto g = backward(m, test::random_batch(6, 4, 3, 2));
  ParamMask mask;
  for (const auto& l : m.layers)
    mask.push_back({Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(l.weight.rows(), l.weight.cols(), false),
                    Eigen::Matrix<bool, Eigen::Dynamic, 1>::Constant(l.bias.size(), false)});
  sgd_step(m, g, SgdParams{.lr = 0.1, .momentum = 0.9, .weight_decay = 0.1}, &mask);
  EXPECT_TRUE(bit_identical(m, before));
}

TEST(NnSgd, RejectsInvalidParameters) {
  auto m = ModelState::init({2, 2}, 1);
  const auto g = zeros_like(m);
  EXPECT_THROW(sgd_step(m, g, SgdParams{.lr = 0.0}), ValidationError);
  EXPECT_THROW(sgd_step(m, g, SgdParams{.lr = 0.1, .momentum = 1.0}), ValidationError);
  EXPECT_THROW(sgd_step(m, Gradients{}, SgdParams{}), StructuralError);
}

TEST(NnInit, DeterministicAndBounded) {
  const auto a = ModelState::init({6, 10, 3}, 42);
  const auto b = ModelState::init({6, 10, 3}, 42);
  const auto c = ModelState::init({6, 10, 3}, 43);
  EXPECT_TRUE(bit_identical(a, b));
  EXPECT_FALSE(same_parameters(a, c));
  EXPECT_LE(a.layers[0].weight.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 16.0));
  EXPECT_TRUE((a.layers[0].bias.array() == 0.0).all());
  EXPECT_EQ(a.parameter_count(), 6u * 10 + 10 + 10 * 3 + 3);
  EXPECT_THROW(ModelState::init({5}, 1), StructuralError);
  EXPECT_THROW(ModelState::init({5, 0, 2}, 1), StructuralError);
}

}  // namespace
}  // namespace ulab
