#include "typespace/errors.hpp"
#include "typespace/optim.hpp"
#include "typespace/tape.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace typespace;
using namespace typespace::testing;

class Gradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(Gradient, MatchesCentralDifferences) {
  Rng rng(1234);
  for (int trial = 0; trial < 10; ++trial) {
    GradReport r = GetParam().run(rng);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel, 1e-4) << "trial " << trial << " worst " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, Gradient, ::testing::ValuesIn(gradient_cases()),
                         [](const auto &info) { return info.param.name; });

TEST(Tape, ForwardValues) {
  Tape t;
  auto a = t.constant(Tensor(2, 2, {1, 2, 3, 4}));
  auto b = t.constant(Tensor(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(t.value(t.matmul(a, b)), Tensor(2, 2, {19, 22, 43, 50}));
  EXPECT_EQ(t.value(t.hinge(a, -2.5)), Tensor(2, 2, {0, 0, 0.5, 1.5}));
  EXPECT_EQ(t.value(t.l1_rows(a, b)), Tensor(2, 1, {8, 8}));
  EXPECT_EQ(t.value(t.sum(a)).item(), 10);
  EXPECT_EQ(t.value(t.mean(a)).item(), 2.5);
  EXPECT_EQ(t.value(t.gather_rows(a, {1, 1, 0})), Tensor(3, 2, {3, 4, 3, 4, 1, 2}));
}

TEST(Tape, SoftmaxXentUniform) {
  Tape t;
  auto l = t.softmax_xent(t.constant(Tensor(1, 5, 0.0)), {3});
  EXPECT_NEAR(t.value(l).item(), std::log(5.0), 1e-12);
}

TEST(Tape, SegmentMaxTiesGoToLowestRow) {
  ParamStore s;
  int a = s.add("a", Tensor(3, 1, {2, 2, 1}));
  Tape t(&s);
  auto m = t.segment_max(t.param(a), {0, 0, 0}, 2);
  EXPECT_EQ(t.value(m), Tensor(2, 1, {2, 0}));
  t.backward(t.sum(m));
  EXPECT_EQ(s.grad(a), Tensor(3, 1, {1, 0, 0}));
}

TEST(Tape, EmptySegmentsAreZero) {
  Tape t;
  auto a = t.constant(Tensor(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(t.value(t.segment_sum(a, {2, 2}, 3)), Tensor(3, 2, {0, 0, 0, 0, 4, 6}));
}

TEST(Tape, BackwardOnlyOnce) {
  Tape t;
  auto a = t.input(Tensor::scalar(2));
  auto y = t.mul(a, a);
  t.backward(y);
  EXPECT_EQ(t.grad(a).item(), 4);
  EXPECT_THROW(t.backward(y), ContractViolation);
}

TEST(Tape, ShapeMismatchIsContractViolation) {
  Tape t;
  auto a = t.constant(Tensor(2, 3));
  auto b = t.constant(Tensor(2, 3));
  EXPECT_THROW(t.matmul(a, b), ContractViolation);
  EXPECT_THROW(t.add(a, t.constant(Tensor(3, 2))), ContractViolation);
}

TEST(Tape, ZeroRowInputs) {
  Tape t;
  auto a = t.input(Tensor(0, 3));
  auto w = t.constant(Tensor(3, 2, 1.0));
  auto y = t.matmul(a, w);
  EXPECT_EQ(t.value(y).rows, 0u);
  t.backward(t.sum(y));
  EXPECT_EQ(t.grad(a).rows, 0u);
}

TEST(Rng, Deterministic) {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> x, y, z;
  for (int i = 0; i < 5; ++i) {
    x.push_back(a.next());
    y.push_back(b.next());
    z.push_back(c.next());
  }
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(3), 3u);
  }
}

TEST(ParamStore, DuplicateNamesRejected) {
  ParamStore s;
  s.add("w", Tensor(1, 1));
  EXPECT_THROW(s.add("w", Tensor(1, 1)), ContractViolation);
}

TEST(ParamStore, WithoutAndRounding) {
  ParamStore s;
  s.add("a", Tensor(1, 1, 0.1));
  s.add("b", Tensor(1, 2, 0.2));
  ParamStore t = s.without({"a"});
  EXPECT_FALSE(t.has("a"));
  EXPECT_TRUE(t.has("b"));
  t.round_to_float();
  EXPECT_EQ(t.value("b").data[0], static_cast<double>(0.2f));
}

TEST(ParamStore, GradientClipping) {
  ParamStore s;
  int a = s.add("a", Tensor(1, 2));
  s.grad(a) = Tensor(1, 2, {3, 4});
  s.clip_grad(1.0);
  EXPECT_NEAR(s.grad_norm(), 1.0, 1e-12);
  EXPECT_NEAR(s.grad(a).data[0], 0.6, 1e-12);
}

TEST(Adam, MinimizesQuadratic) {
  ParamStore s;
  int x = s.add("x", Tensor(1, 2, {3, -2}));
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Adam opt(s, cfg);
  for (int i = 0; i < 500; ++i) {
    Tape t(&s);
    auto v = t.param(x);
    t.backward(t.sum(t.mul(v, v)));
    opt.step();
  }
  EXPECT_NEAR(s.value(x).data[0], 0, 1e-2);
  EXPECT_NEAR(s.value(x).data[1], 0, 1e-2);
  EXPECT_EQ(opt.steps(), 500);
}

TEST(Gru, ScalarHandComputation) {
  // D = 1 with fixed weights, evaluated by hand.
  ParamStore s;
  Rng rng(0);
  GruWeights w = GruWeights::create(s, "g/", 1, rng);
  double wz = 0.5, uz = -0.3, bz = 0.1, wr = 0.2, ur = 0.4, br = -0.1, wh = 0.7, uh = -0.6,
         bh = 0.05;
  for (auto [id, v] : std::vector<std::pair<int, double>>{{w.w_z, wz}, {w.u_z, uz}, {w.b_z, bz},
                                                          {w.w_r, wr}, {w.u_r, ur}, {w.b_r, br},
                                                          {w.w_h, wh}, {w.u_h, uh}, {w.b_h, bh}})
    s.value(id) = Tensor::scalar(v);
  double x = 0.8, h = -0.4;
  auto sig = [](double a) { return 1 / (1 + std::exp(-a)); };
  double z = sig(x * wz + h * uz + bz);
  double r = sig(x * wr + h * ur + br);
  double c = std::tanh(x * wh + (r * h) * uh + bh);
  double expect = (1 - z) * h + z * c;
  Tape t(&s);
  auto out = gru_cell(t, t.constant(Tensor::scalar(x)), t.constant(Tensor::scalar(h)),
                      GruVars::bind(t, w));
  EXPECT_NEAR(t.value(out).item(), expect, 1e-14);
}
