#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fpsr/ops.hpp"
#include "fpsr/tensor.hpp"

using namespace fpsr;

TEST(Tensor, SumGivesUnitGradient) {
  Tensor<double> x({2, 3}, 0.7);
  x.set_requires_grad(true);
  backward(ops::sum(x));
  ASSERT_TRUE(x.has_grad());
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tensor, SquareSumGradientIsTwiceInput) {
  Tensor<double> x({2}, std::vector<double>{1.0, 2.0});
  x.set_requires_grad(true);
  backward(ops::sum(ops::square(x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Tensor, GradientsAccumulateAcrossGraphs) {
  Tensor<double> x({3}, 1.5);
  x.set_requires_grad(true);
  backward(ops::sum(x));
  backward(ops::sum(ops::scale(x, 2.0)));
  for (double g : x.grad()) EXPECT_EQ(g, 3.0);
  x.zero_grad();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
  x.clear_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tensor, SharedSubexpressionSumsBothPaths) {
  Tensor<double> x({1}, std::vector<double>{3.0});
  x.set_requires_grad(true);
  const auto y = ops::mul(x, x);
  backward(ops::sum(ops::add(y, y)));
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(Tensor, SecondBackwardOnSameLossIsRejected) {
  Tensor<float> x({2}, 1.0f);
  x.set_requires_grad(true);
  const auto loss = ops::sum(x);
  backward(loss);
  EXPECT_THROW(backward(loss), TapeError);
}

TEST(Tensor, NonScalarLossIsRejected) {
  Tensor<float> x({2}, 1.0f);
  x.set_requires_grad(true);
  EXPECT_THROW(backward(ops::square(x)), TapeError);
}

TEST(Tensor, LossOffTheTapeIsRejected) {
  Tensor<float> x({2}, 1.0f);
  EXPECT_THROW(backward(ops::sum(x)), TapeError);
}

TEST(Tensor, NonFiniteForwardIsReported) {
  Tensor<double> x({1}, std::vector<double>{1e308});
  EXPECT_THROW(ops::scale(x, 10.0), NumericError);
  Tensor<double> z({1}, std::vector<double>{0.0});
  EXPECT_NO_THROW(ops::log_clamped(z));
}

TEST(Tensor, NoGradGuardStopsRecording) {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad(true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(GradMode::enabled());
    y = ops::square(x);
  }
  EXPECT_TRUE(GradMode::enabled());
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, DetachCutsTheTape) {
  Tensor<double> x({2}, 2.0);
  x.set_requires_grad(true);
  const auto y = ops::square(x).detach();
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(y.data()[0], 4.0);
}

TEST(Tensor, WritesToIntermediatesAreRejected) {
  Tensor<double> x({2}, 2.0);
  x.set_requires_grad(true);
  auto y = ops::square(x);
  EXPECT_THROW(y.mutable_data(), TapeError);
  EXPECT_THROW(y.set_requires_grad(false), TapeError);
}

TEST(Tensor, CopiesShareStorageAndCloneDoesNot) {
  Tensor<float> a({2}, 1.0f);
  Tensor<float> b = a;
  Tensor<float> c = a.clone();
  a.mutable_data()[0] = 5.0f;
  EXPECT_EQ(b.data()[0], 5.0f);
  EXPECT_EQ(c.data()[0], 1.0f);
}

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  Tensor<float> a({2, 3});
  EXPECT_THROW(a.reshape({4, 2}), ShapeError);
  EXPECT_EQ(a.reshape({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(ops::add(a, Tensor<float>({3, 2})), ShapeError);
  EXPECT_THROW(a.item(), ShapeError);
  EXPECT_EQ(shape_numel({2, 3, 4}), 24);
}

TEST(Tensor, ReshapePassesGradientThrough) {
  Tensor<double> x({2, 3}, 1.0);
  x.set_requires_grad(true);
  backward(ops::sum(ops::square(x.reshape({6}))));
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}
