#include <gtest/gtest.h>

#include "fpsr/ops.hpp"
#include "gradcheck.hpp"

using namespace fpsr;
using fpsr::testkit::GradCase;

namespace {

class OpGradient : public ::testing::TestWithParam<GradCase> {};
class NetworkGradient : public ::testing::TestWithParam<GradCase> {};

void expect_passes(const GradCase& c, std::uint64_t seed) {
  const auto r = testkit::check_gradients(c, derive_seed(seed, c.name));
  EXPECT_GE(r.instances, 20);
  EXPECT_GT(r.coords, 0);
  EXPECT_LT(r.max_rel_error, 1e-4) << c.name << ": " << r.worst;
}

std::string case_name(const ::testing::TestParamInfo<GradCase>& info) { return info.param.name; }

}  // namespace

TEST_P(OpGradient, MatchesCentralDifferences) { expect_passes(GetParam(), 5); }
TEST_P(NetworkGradient, MatchesCentralDifferences) { expect_passes(GetParam(), 6); }

INSTANTIATE_TEST_SUITE_P(All, OpGradient, ::testing::ValuesIn(testkit::op_grad_cases()), case_name);
INSTANTIATE_TEST_SUITE_P(Tiny, NetworkGradient, ::testing::ValuesIn(testkit::network_grad_cases()), case_name);

TEST(GradCheck, DetectsAWrongGradient) {
  // The detached factor hides part of the dependence from the tape.
  const GradCase broken{"broken", [](Rng& r) {
                          Tensor<double> x({3});
                          for (auto& v : x.mutable_data()) v = r.uniform(0.5, 1.0);
                          x.set_requires_grad(true);
                          return testkit::GradInstance{{x}, [x] { return ops::mul(x, x.detach()); }};
                        }};
  const auto r = testkit::check_gradients(broken, 1);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 0.1);
}

namespace {

// relu(x - c) with the kink 3e-6 below every x, inside the central stencil.
GradCase kink_case(bool break_gradient) {
  return {"kink", [break_gradient](Rng& r) {
            Tensor<double> x({4});
            Tensor<double> c({4});
            for (std::int64_t i = 0; i < 4; ++i) {
              x.mutable_data()[i] = r.uniform(0.5, 1.0);
              c.mutable_data()[i] = x.data()[i] - 3e-6;
            }
            x.set_requires_grad(true);
            return testkit::GradInstance{{x}, [x, c, break_gradient] {
                                           auto y = ops::relu(ops::sub(x, c));
                                           return break_gradient ? ops::add(y, ops::mul(x, x.detach())) : y;
                                         }};
          }};
}

}  // namespace

TEST(GradCheck, SettlesProbesThatStraddleAKink) {
  const auto r = testkit::check_gradients(kink_case(false), 2);
  EXPECT_TRUE(r.passed) << r.worst;
  EXPECT_GT(r.kink_refinements, 0);
}

TEST(GradCheck, DetectsAWrongGradientNextToAKink) {
  const auto r = testkit::check_gradients(kink_case(true), 3);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_rel_error, 0.1);
}
