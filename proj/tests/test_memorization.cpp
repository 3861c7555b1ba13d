#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "ulab/memorization.hpp"

namespace ulab {
namespace {

MemConfig tiny_mem(int n_models) {
  MemConfig c;
  c.n_models = n_models;
  c.model = ModelSpec{{6}};
  c.train.epochs = 4;
  c.train.batch_size = 8;
  c.seed = 17;
  return c;
}

TEST(Memorization, InOutDifference) {
  detail::InOutCounts c(2);
  c.in_hits = {4, 3};
  c.in_n = {5, 3};
  c.out_hits = {0, 0};
  c.out_n = {5, 0};
  const auto s = c.scores();
  EXPECT_DOUBLE_EQ(s[0], 0.8);
  EXPECT_TRUE(std::isnan(s[1]));
}

TEST(Memorization, JobsDoNotChangeScores) {
  const auto ds = test::blobs(5, 40, 10, 1.0);
  const auto a = estimate_memorization(ds, tiny_mem(6), 1);
  const auto b = estimate_memorization(ds, tiny_mem(6), 3);
  ASSERT_EQ(a.ids, b.ids);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a.scores[i])) {
      EXPECT_TRUE(std::isnan(b.scores[i]));
    } else {
      EXPECT_EQ(a.scores[i], b.scores[i]);
    }
  }
}

TEST(Memorization, ScoresAreBoundedAndTagged) {
  const auto ds = test::blobs(6, 40, 10, 1.0);
  const auto t = estimate_memorization(ds, tiny_mem(10));
  EXPECT_EQ(t.kind, ScoreKind::memorization);
  EXPECT_EQ(t.n_models, 10);
  EXPECT_EQ(t.ids, ds.train_ids());
  for (double v : t.defined_values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Memorization, RejectsBadConfig) {
  const auto ds = test::blobs(6, 20, 4);
  EXPECT_THROW(estimate_memorization(ds, tiny_mem(1)), ValidationError);
  auto c = tiny_mem(4);
  c.subset_fraction = 1.0;
  EXPECT_THROW(estimate_memorization(ds, c), ValidationError);
}

TEST(ExactLoo, GuardsSizeAndSeeds) {
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(exact_loo(test::blobs(1, 65, 4), ModelSpec{{4}}, tc, 10), ValidationError);
  EXPECT_THROW(exact_loo(test::blobs(1, 10, 4), ModelSpec{{4}}, tc, 9), ValidationError);
}

TEST(ExactLoo, DuplicatedExamplesAreNotMemorized) {
  // every train point appears twice, so dropping one leaves its twin
  const auto base = test::blobs(8, 12, 0, 1.0);
  Matrix x(24, 2);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 12; ++i) {
    x.row(2 * i) = base.features.row(i);
    x.row(2 * i + 1) = base.features.row(i);
    y.push_back(base.labels[static_cast<std::size_t>(i)]);
    y.push_back(base.labels[static_cast<std::size_t>(i)]);
  }
  // flip one pair so there is something to memorize
  y[0] = y[1] = 1 - y[0];
  const auto ds = test::points_dataset(x, y, 2, 24);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 8;
  const auto t = exact_loo(ds, ModelSpec{{16}}, tc, 10, 3, 2);
  for (double v : t.scores) EXPECT_LE(v, 0.2);
}

}  // namespace
}  // namespace ulab
