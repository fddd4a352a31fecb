#include "typespace/errors.hpp"
#include "typespace/objective.hpp"

#include "synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace typespace;

namespace {

double l1(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::abs(a[i] - b[i]);
  return s;
}

// Direct evaluation of the similarity loss from its set definitions.
double space_oracle(const std::vector<std::vector<double>> &x, const std::vector<int> &y,
                    double m) {
  double total = 0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (j != s)
        (y[j] == y[s] ? pos : neg).push_back(l1(x[s], x[j]));
    if (pos.empty() || neg.empty())
      continue;
    double neg_min = *std::min_element(neg.begin(), neg.end());
    double pos_max = *std::max_element(pos.begin(), pos.end());
    double sp = 0, sn = 0;
    int np = 0, nn = 0;
    for (double d : pos)
      if (d > neg_min - m) {
        sp += d;
        ++np;
      }
    for (double d : neg)
      if (d < pos_max + m) {
        sn += d;
        ++nn;
      }
    total += (np ? sp / np : 0) - (nn ? sn / nn : 0);
  }
  return total / static_cast<double>(x.size());
}

Tensor rows(const std::vector<std::vector<double>> &x) {
  Tensor t(x.size(), x.empty() ? 0 : x[0].size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j)
      t(i, j) = x[i][j];
  return t;
}

double softmax_xent_oracle(const std::vector<double> &logits, int target) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits)
    z += std::exp(l - mx);
  return -(logits[target] - mx - std::log(z));
}

} // namespace

TEST(LossKind, Names) {
  for (LossKind k : {LossKind::Class, LossKind::Space, LossKind::Combined})
    EXPECT_EQ(parse_loss_kind(loss_kind_name(k)), k);
  EXPECT_EQ(parse_loss_kind("typilus"), LossKind::Combined);
  EXPECT_FALSE(parse_loss_kind("bogus"));
}

TEST(ClassificationLoss, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 3u, 7u, 50u}) {
    Tape t;
    auto reps = t.constant(Tensor(4, 3, 0.0));
    auto protos = t.constant(Tensor(3, c, 0.25));
    auto bias = t.constant(Tensor(1, c, 0.0));
    auto l = classification_loss(t, reps, {0, 1, 0, 1}, protos, bias);
    EXPECT_NEAR(t.value(l).item(), std::log(static_cast<double>(c)), 1e-9);
  }
}

TEST(ClassificationLoss, ToyLogitsMatchSoftmax) {
  // reps (2 x 2) times prototypes (2 x 3) plus bias.
  Tape t;
  auto reps = t.constant(Tensor(2, 2, {1.0, -0.5, 0.3, 2.0}));
  auto protos = t.constant(Tensor(2, 3, {0.2, -1.0, 0.5, 0.7, 0.1, -0.3}));
  auto bias = t.constant(Tensor(1, 3, {0.1, 0.0, -0.2}));
  auto l = classification_loss(t, reps, {2, 0}, protos, bias);
  std::vector<double> a = {1.0 * 0.2 - 0.5 * 0.7 + 0.1, 1.0 * -1.0 - 0.5 * 0.1, 1.0 * 0.5 + 0.5 * 0.3 - 0.2};
  std::vector<double> b = {0.3 * 0.2 + 2.0 * 0.7 + 0.1, 0.3 * -1.0 + 2.0 * 0.1, 0.3 * 0.5 - 2.0 * 0.3 - 0.2};
  double expect = (softmax_xent_oracle(a, 2) + softmax_xent_oracle(b, 0)) / 2;
  EXPECT_NEAR(t.value(l).item(), expect, 1e-6);
}

TEST(TripletLoss, HandComputed) {
  Tape t;
  auto s = t.constant(Tensor(1, 2, {0.0, 0.0}));
  auto p = t.constant(Tensor(1, 2, {1.0, 2.0}));  // d = 3
  auto n = t.constant(Tensor(1, 2, {-0.5, 1.0})); // d = 1.5
  EXPECT_DOUBLE_EQ(t.value(triplet_loss(t, s, p, n, 1.0)).item(), 3 - 1.5 + 1);
  auto far = t.constant(Tensor(1, 2, {4.0, 4.0})); // d = 8
  EXPECT_EQ(t.value(triplet_loss(t, s, p, far, 1.0)).item(), 0.0);
}

TEST(TripletLoss, EquidistantGivesMargin) {
  for (double m : {0.5, 1.0, 2.0, 3.25}) {
    Tape t;
    auto s = t.constant(Tensor(1, 2, {0.0, 0.0}));
    auto p = t.constant(Tensor(1, 2, {1.0, -1.0}));
    auto n = t.constant(Tensor(1, 2, {-2.0, 0.0}));
    EXPECT_EQ(t.value(triplet_loss(t, s, p, n, m)).item(), m);
  }
}

TEST(SpaceLoss, ThreeSymbolsTwoTypesByHand) {
  // x = 0, 1 (type A), 3 (type B), m = 1.
  //   s0: S+ {1}, S- {3}: P+ {1 > 2} empty, P- {3 < 2} empty   -> 0
  //   s1: S+ {1}, S- {2}: P+ {1 > 1} empty, P- {2 < 2} empty   -> 0
  //   s2: no same-typed symbol                                 -> 0
  // With m = 2.5:
  //   s0: P+ {1 > 0.5} = {1}, P- {3 < 3.5} = {3}  -> 1 - 3 = -2
  //   s1: P+ {1 > -0.5} = {1}, P- {2 < 3.5} = {2} -> 1 - 2 = -1
  // mean over three rows: -1.
  Tape t;
  auto r = t.constant(Tensor(3, 1, {0.0, 1.0, 3.0}));
  EXPECT_EQ(t.value(space_loss(t, r, {0, 0, 1}, 1.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(t.value(space_loss(t, r, {0, 0, 1}, 2.5)).item(), -1.0);
}

TEST(SpaceLoss, MatchesSetOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng.below(9), d = 1 + rng.below(4);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(3));
      for (auto &v : x[i])
        v = rng.uniform(-2, 2);
    }
    double m = rng.uniform(0.1, 3);
    Tape t;
    double got = t.value(space_loss(t, t.constant(rows(x)), y, m)).item();
    EXPECT_NEAR(got, space_oracle(x, y, m), 1e-12);
  }
}

TEST(SpaceLoss, MarginSatisfiedBatchIsZero) {
  Tape t;
  auto r = t.constant(Tensor(4, 2, {0.0, 0.0, 0.1, 0.0, 10.0, 10.0, 10.0, 10.1}));
  EXPECT_EQ(t.value(space_loss(t, r, {0, 0, 1, 1}, 2.0)).item(), 0.0);
}

TEST(CombinedLoss, LambdaZeroIsSpaceLossBitwise) {
  Rng rng(3);
  ParamStore s;
  init_head_params(s, 3, 4, true, rng);
  Tensor reps(5, 3);
  for (auto &v : reps.data)
    v = rng.uniform(-1, 1);
  std::vector<int> labels = {0, 1, 0, 2, 1}, classes = {1, 2, 1, 3, 2};
  Tape a;
  double space = a.value(space_loss(a, a.constant(reps), labels, 2.0)).item();
  Tape b;
  LossTerms terms = combined_loss(b, b.constant(reps), labels, classes, HeadVars::bind(b, s), 2.0, 0.0);
  EXPECT_EQ(b.value(terms.total).item(), space);
  EXPECT_EQ(terms.cls, -1);
}

TEST(CombinedLoss, SumOfComponents) {
  Rng rng(4);
  ParamStore s;
  init_head_params(s, 2, 3, true, rng);
  Tensor reps(4, 2, {0.5, -0.2, 0.1, 0.9, -1.0, 0.3, 0.4, 0.4});
  std::vector<int> labels = {0, 1, 0, 1}, classes = {1, 2, 1, 0};
  double lambda = 0.6;
  Tape a;
  double space = a.value(space_loss(a, a.constant(reps), labels, 2.0)).item();
  // Projected representations through W, then the classifier.
  const Tensor &W = s.value("proj/W"), &P = s.value("class/prototypes"), &B = s.value("class/bias");
  double cls = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> z(2, 0.0), logits(3, 0.0);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < 2; ++k)
        z[c] += reps(i, k) * W(k, c);
    for (std::size_t c = 0; c < 3; ++c) {
      logits[c] = B(0, c);
      for (std::size_t k = 0; k < 2; ++k)
        logits[c] += z[k] * P(k, c);
    }
    cls += softmax_xent_oracle(logits, classes[i]);
  }
  cls /= 4;
  Tape b;
  LossTerms terms = combined_loss(b, b.constant(reps), labels, classes, HeadVars::bind(b, s), 2.0, lambda);
  EXPECT_NEAR(b.value(terms.total).item(), space + lambda * cls, 1e-12);
  EXPECT_NEAR(b.value(terms.cls).item(), cls, 1e-12);
}

TEST(CombinedLoss, MissingHeadsAreAContractViolation) {
  ParamStore empty;
  Tape t;
  auto reps = t.constant(Tensor(2, 2, 0.0));
  EXPECT_THROW(combined_loss(t, reps, {0, 1}, {0, 1}, HeadVars::bind(t, empty), 1.0, 1.0),
               ContractViolation);
}

TEST(ClassVocabulary, CountsAndErasure) {
  std::vector<CodeGraph> g = {extract_graph("a: List[int] = []\nb: List[str] = []\nc: int = 1\n"),
                              extract_graph("d: int = 2\ne: List[int] = []\n")};
  ClassVocabulary erased = ClassVocabulary::build(g, 2, true);
  EXPECT_EQ(erased.names()[0], ClassVocabulary::kUnk);
  EXPECT_GT(erased.lookup(parse_type("List[str]")), 0);
  EXPECT_EQ(erased.lookup(parse_type("List[str]")), erased.lookup(parse_type("List")));
  EXPECT_GT(erased.lookup(parse_type("int")), 0);
  ClassVocabulary full = ClassVocabulary::build(g, 2, false);
  EXPECT_GT(full.lookup(parse_type("List[int]")), 0);
  EXPECT_EQ(full.lookup(parse_type("List[str]")), 0);
  EXPECT_EQ(full.lookup(parse_type("Widget")), 0);
}

TEST(MakeBatches, EachAnnotatedGraphOnce) {
  auto graphs = typespace::testing::synthetic_corpus({.files = 12});
  graphs.push_back(extract_graph("x = 1\n")); // no annotations
  for (std::size_t size : {1u, 10u, 30u, 1000u}) {
    Rng rng(5);
    auto batches = make_batches(graphs, size, rng);
    std::vector<int> seen;
    for (const auto &b : batches) {
      std::size_t symbols = 0;
      for (int g : b) {
        seen.push_back(g);
        symbols += graphs[g].annotated_count();
      }
      if (&b != &batches.back())
        EXPECT_GE(symbols, size);
    }
    std::sort(seen.begin(), seen.end());
    std::vector<int> expect(12);
    std::iota(expect.begin(), expect.end(), 0);
    EXPECT_EQ(seen, expect);
    Rng again(5);
    EXPECT_EQ(make_batches(graphs, size, again), batches);
  }
}

TEST(BatchTargets, EqualTypesShareLabels) {
  CodeGraph g = extract_graph("a: int = 1\nb: str = ''\nc: int = 2\nd = 3\n");
  Vocabulary vocab = Vocabulary::build({g}, 1);
  GraphBatch batch = make_graph_batch({&g}, vocab);
  ClassVocabulary classes = ClassVocabulary::from_list({"int"}, true);
  BatchTargets t = batch_targets(batch, {&g}, classes);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.labels[0], t.labels[2]);
  EXPECT_NE(t.labels[0], t.labels[1]);
  EXPECT_EQ(t.classes[0], classes.lookup(parse_type("int")));
  EXPECT_EQ(t.classes[1], 0);
}
