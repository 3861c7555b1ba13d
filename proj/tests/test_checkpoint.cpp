#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "ulab/checkpoint.hpp"

namespace ulab {
namespace {

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = ModelState::init({5, 7, 3}, 99, Activation::tanh);
  sgd_step(m, backward(m, test::random_batch(1, 4, 5, 3)), SgdParams{.lr = 0.1, .momentum = 0.9});
  std::stringstream ss;
  write_checkpoint(ss, m, 0xabcdefULL);
  CheckpointHeader h;
  const auto back = read_checkpoint(ss, &h);
  EXPECT_TRUE(bit_identical(m, back));
  EXPECT_EQ(h.seed, 99u);
  EXPECT_EQ(h.config_digest, 0xabcdefULL);
}

TEST(Checkpoint, RejectsGarbageAndTruncation) {
  std::stringstream bad("not a checkpoint at all");
  EXPECT_THROW(read_checkpoint(bad), StructuralError);
  std::stringstream ss;
  write_checkpoint(ss, ModelState::init({3, 2}, 1));
  const auto full = ss.str();
  std::stringstream cut(full.substr(0, full.size() - 4));
  EXPECT_THROW(read_checkpoint(cut), StructuralError);
}

}  // namespace
}  // namespace ulab
