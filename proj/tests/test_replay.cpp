#include <doctest.h>

#include "ldcq/replay.hpp"

using namespace ldcq;
using namespace ldcq::qlearn;
using Eigen::VectorXd;

namespace {

SkillTransition transition_of(double ret) {
  SkillTransition t;
  t.s = VectorXd::Zero(1);
  t.z = VectorXd::Zero(1);
  t.s_next = VectorXd::Zero(1);
  t.ret = ret;
  t.steps_valid = 1;
  return t;
}

}  // namespace

TEST_CASE("sum tree: point updates and prefix search") {
  SumTree tree(5);
  for (int i = 0; i < 5; ++i) tree.set(i, i + 1.0);  // 1 2 3 4 5
  CHECK(tree.total() == 15.0);
  CHECK(tree.find(0.0) == 0);
  CHECK(tree.find(0.999) == 0);
  CHECK(tree.find(1.0) == 1);
  CHECK(tree.find(5.999) == 2);
  CHECK(tree.find(14.999) == 4);
  tree.set(2, 0.0);
  CHECK(tree.total() == 12.0);
  CHECK(tree.find(3.0) == 3);
}

TEST_CASE("per: equal priorities sample uniformly with unit weights") {
  PrioritizedBuffer buffer(8, 0.7);
  for (int i = 0; i < 10; ++i) buffer.add(transition_of(i));
  Rng rng(5);
  const auto batch = buffer.sample(64, rng);
  for (double w : batch.weights) CHECK(w == 1.0);
  // frequencies roughly uniform
  std::vector<int> counts(10, 0);
  Rng rng2(6);
  const int draws = 60000;
  for (int i = 0; i < draws; i += 64)
    for (int idx : buffer.sample(64, rng2).indices) ++counts[idx];
  for (int c : counts) CHECK(std::abs(c / double(60032) - 0.1) < 0.01);
}

TEST_CASE("per: alpha=0 samples uniformly regardless of priorities") {
  PrioritizedBuffer buffer(4, /*per_alpha=*/0.0);
  for (int i = 0; i < 4; ++i) buffer.add(transition_of(i));
  buffer.update_priorities({0, 1, 2, 3}, {100.0, 1.0, 1.0, 1.0});
  Rng rng(7);
  std::vector<int> counts(4, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[buffer.sample(1, rng).indices[0]];
  for (int c : counts) CHECK(std::abs(c / double(draws) - 0.25) < 0.01);
}

TEST_CASE("per: empirical frequencies follow p^alpha (Monte-Carlo oracle)") {
  PrioritizedBuffer buffer(4, /*per_alpha=*/1.0, /*per_eps=*/1e-9);
  for (int i = 0; i < 3; ++i) buffer.add(transition_of(i));
  buffer.update_priorities({0, 1, 2}, {1.0 - 1e-9, 2.0 - 1e-9, 4.0 - 1e-9});
  Rng rng(11);
  std::vector<int> counts(3, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[buffer.sample(1, rng).indices[0]];
  CHECK(std::abs(counts[0] / double(draws) - 1.0 / 7.0) < 0.01);
  CHECK(std::abs(counts[1] / double(draws) - 2.0 / 7.0) < 0.01);
  CHECK(std::abs(counts[2] / double(draws) - 4.0 / 7.0) < 0.01);
}

TEST_CASE("per: priority floor and monotone refresh") {
  PrioritizedBuffer buffer(4, 0.7, 1e-3);
  buffer.add(transition_of(0));
  buffer.add(transition_of(1));
  buffer.update_priorities({0}, {0.0});
  CHECK(buffer.raw_priority(0) == 1e-3);  // never zero
  buffer.update_priorities({0, 1}, {0.5, 2.0});
  CHECK(buffer.raw_priority(1) > buffer.raw_priority(0));

  // the refreshed element's sampling frequency rises accordingly
  Rng rng(13);
  int hit1 = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    if (buffer.sample(1, rng).indices[0] == 1) ++hit1;
  const double mass0 = std::pow(0.5 + 1e-3, 0.7), mass1 = std::pow(2.0 + 1e-3, 0.7);
  CHECK(std::abs(hit1 / double(draws) - mass1 / (mass0 + mass1)) < 0.01);
}

TEST_CASE("per: beta schedule grows 0.3 -> 1.0 by 0.03 every 3000 steps") {
  PrioritizedBuffer buffer(4);
  buffer.add(transition_of(0));
  buffer.set_train_step(0);
  CHECK(buffer.beta() == doctest::Approx(0.3));
  buffer.set_train_step(2999);
  CHECK(buffer.beta() == doctest::Approx(0.3));
  buffer.set_train_step(3000);
  CHECK(buffer.beta() == doctest::Approx(0.33));
  buffer.set_train_step(30000);
  CHECK(buffer.beta() == doctest::Approx(0.6));
  buffer.set_train_step(3000L * 24);
  CHECK(buffer.beta() == doctest::Approx(1.0));
  buffer.set_train_step(1000000);
  CHECK(buffer.beta() == 1.0);
}

TEST_CASE("per: importance weights are normalized by the batch max") {
  PrioritizedBuffer buffer(4, 1.0, 1e-9);
  for (int i = 0; i < 3; ++i) buffer.add(transition_of(i));
  buffer.update_priorities({0, 1, 2}, {1.0, 1.0, 9.0});
  buffer.set_train_step(3000L * 24);  // beta = 1
  Rng rng(17);
  const auto batch = buffer.sample(256, rng);
  double max_w = 0.0;
  for (double w : batch.weights) {
    CHECK(w <= 1.0 + 1e-12);
    max_w = std::max(max_w, w);
  }
  CHECK(max_w == doctest::Approx(1.0));
  // rare (low priority) entries must carry larger weights than common ones
  double w_low = 0, w_high = 0;
  for (std::size_t i = 0; i < batch.indices.size(); ++i) {
    if (batch.indices[i] == 0) w_low = batch.weights[i];
    if (batch.indices[i] == 2) w_high = batch.weights[i];
  }
  if (w_low > 0 && w_high > 0) CHECK(w_low > w_high);
}

TEST_CASE("per: buffer grows past its capacity hint") {
  PrioritizedBuffer buffer(2);
  for (int i = 0; i < 100; ++i) buffer.add(transition_of(i));
  CHECK(buffer.size() == 100);
  Rng rng(3);
  const auto batch = buffer.sample(32, rng);
  for (int idx : batch.indices) {
    CHECK(idx >= 0);
    CHECK(idx < 100);
  }
  CHECK_THROWS_AS(buffer.update_priorities({100}, {1.0}), std::out_of_range);
}

TEST_CASE("per: sampling from an empty buffer fails") {
  PrioritizedBuffer buffer(4);
  Rng rng(1);
  CHECK_THROWS_AS(buffer.sample(1, rng), std::runtime_error);
}
