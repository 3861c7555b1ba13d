#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "ulab/trainer.hpp"

namespace ulab {
namespace {

TEST(Schedule, CosineEndpoints) {
  TrainConfig c;
  c.epochs = 10;
  c.base_lr = 0.2;
  EXPECT_DOUBLE_EQ(lr_at(c, 0), 0.2);
  EXPECT_NEAR(lr_at(c, 5), 0.1, 1e-15);
  EXPECT_LT(lr_at(c, 9), lr_at(c, 8));
  EXPECT_THROW(lr_at(c, 10), ValidationError);
  EXPECT_THROW(lr_at(c, -1), ValidationError);
}

TEST(Schedule, MultistepAndConstant) {
  TrainConfig c;
  c.epochs = 10;
  c.base_lr = 0.1;
  c.schedule = {ScheduleKind::multistep, {3, 6}, 0.2};
  EXPECT_DOUBLE_EQ(lr_at(c, 2), 0.1);
  EXPECT_NEAR(lr_at(c, 3), 0.02, 1e-15);
  EXPECT_NEAR(lr_at(c, 9), 0.004, 1e-15);
  c.schedule = {ScheduleKind::constant, {}, 0.2};
  EXPECT_DOUBLE_EQ(lr_at(c, 7), 0.1);
  EXPECT_EQ(parse_schedule("cosine"), ScheduleKind::cosine);
  EXPECT_THROW(parse_schedule("linear"), ValidationError);
}

TEST(Train, SeparableBlobsAreLearned) {
  const auto ds = test::blobs(1, 200, 100);
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 16;
  c.seed = 4;
  const auto res = train_from_scratch(ds, ds.train_ids(), ModelSpec{{8}}, c);
  EXPECT_GE(accuracy(res.model, ds, ds.train_ids()), 0.99);
  EXPECT_GE(accuracy(res.model, ds, ds.test_ids()), 0.99);
  EXPECT_EQ(res.epoch_loss.size(), 20u);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
}

TEST(Train, EventLogShapeAndBounds) {
  const auto ds = test::blobs(2, 60, 20, 1.0);
  TrainConfig c;
  c.epochs = 5;
  c.batch_size = 8;
  const auto ids = ds.train_ids();
  const auto res = train_from_scratch(ds, ids, ModelSpec{{6}}, c, {.log_events = true, .checkpoint_every = 2});
  EXPECT_EQ(res.log.epochs(), 5);
  EXPECT_EQ(res.log.ids, ids);
  EXPECT_TRUE((res.log.true_prob.array() >= 0.0 && res.log.true_prob.array() <= 1.0).all());
  EXPECT_TRUE((res.log.max_prob.array() >= 0.5 && res.log.max_prob.array() <= 1.0).all());
  EXPECT_TRUE((res.log.entropy.array() >= 0.0 && res.log.entropy.array() <= std::log(2.0)).all());
  EXPECT_TRUE((res.log.correct.array() == 0.0 || res.log.correct.array() == 1.0).all());
  // epochs 2, 4 and the final one
  ASSERT_EQ(res.checkpoints.size(), 3u);
  EXPECT_TRUE(bit_identical(res.checkpoints.back(), res.model));
  // the last logged row matches the final model
  const auto s = example_signals(res.model, ds, ids);
  EXPECT_EQ(Vector(res.log.true_prob.row(4).transpose()), s.true_prob);
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto ds = test::blobs(3, 50, 10, 1.0);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 7;
  c.seed = 9;
  const auto a = train_from_scratch(ds, ds.train_ids(), ModelSpec{{5}}, c);
  const auto b = train_from_scratch(ds, ds.train_ids(), ModelSpec{{5}}, c);
  EXPECT_TRUE(bit_identical(a.model, b.model));
  EXPECT_EQ(a.log.true_prob, b.log.true_prob);
  c.seed = 10;
  EXPECT_FALSE(same_parameters(train_from_scratch(ds, ds.train_ids(), ModelSpec{{5}}, c).model, a.model));
}

TEST(Train, Errors) {
  const auto ds = test::blobs(4, 10, 4);
  TrainConfig c;
  c.epochs = 1;
  EXPECT_THROW(train_from_scratch(ds, std::vector<std::size_t>{}, ModelSpec{{3}}, c), ValidationError);
  c.epochs = 0;
  EXPECT_THROW(train_from_scratch(ds, ds.train_ids(), ModelSpec{{3}}, c), ValidationError);
  EXPECT_THROW(accuracy(ModelState::init({2, 2}, 1), ds, std::vector<std::size_t>{}), ValidationError);
}

TEST(Accuracy, CountsArgmaxHits) {
  Matrix x(4, 2);
  x << 1, 0, 0, 1, 1, 0, 0, 1;
  const auto ds = test::points_dataset(x, {0, 1, 1, 0}, 2, 4);
  auto m = ModelState::init({2, 2}, 1, Activation::identity);
  m.layers[0].weight.setIdentity();
  m.layers[0].bias.setZero();
  EXPECT_DOUBLE_EQ(accuracy(m, ds, ds.train_ids()), 0.5);
}

}  // namespace
}  // namespace ulab
