#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ldcq/dataset.hpp"
#include "ldcq/errors.hpp"
#include "support.hpp"

using namespace ldcq;
using namespace ldcq::envs;
using Eigen::VectorXd;

namespace {

VectorXd v1(double x) {
  VectorXd v(1);
  v << x;
  return v;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rw1d step dynamics") {
  RandomWalk1d env;
  env.set_state(v1(0.0));
  auto r = env.step(v1(1.0));
  CHECK(r.next_state(0) == 1.0);
  CHECK(r.reward == -1.0);
  CHECK_FALSE(r.done);

  env.set_state(v1(9.5));
  r = env.step(v1(0.9));
  CHECK(r.next_state(0) == 10.0);
  CHECK(r.reward == 10.0);
  CHECK(r.done);

  env.set_state(v1(0.0));
  r = env.step(v1(0.0));
  CHECK(r.next_state(0) == 0.0);
  CHECK(r.reward == -1.0);
  CHECK_FALSE(r.done);

  CHECK_THROWS_AS(env.step(v1(1.5)), std::invalid_argument);
}

TEST_CASE("rw1d behavior: support gap and mode statistics") {
  RandomWalk1d env;
  Rng rng(11);
  const int n = 100000;
  int in_gap = 0, right = 0;
  double right_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = env.behavior_action(rng)(0);
    CHECK(std::abs(a) <= 1.0);
    if (std::abs(a) < 0.8) ++in_gap;
    if (a > 0) {
      ++right;
      right_sum += a;
    }
  }
  CHECK(in_gap == 0);
  CHECK(std::abs(right / double(n) - 0.5) < 0.01);
  // Monte-Carlo oracle: mean of U[0.8, 1.0] is 0.9
  CHECK(std::abs(right_sum / right - 0.9) < 0.005);
}

TEST_CASE("trimodal: behavior terminates at one of exactly three sites") {
  TrimodalPoint env;
  Rng rng(7);
  std::set<int> sites_hit;
  int counts[3] = {0, 0, 0};
  const int episodes = 300;
  for (int e = 0; e < episodes; ++e) {
    Rng ep = rng.stream("ep", e);
    env.reset(ep);
    counts[env.behavior_site()]++;
    bool done = false;
    for (int t = 0; t < env.descriptor().horizon_limit && !done; ++t) {
      auto res = env.step(env.behavior_action(ep));
      done = res.done;
      if (done) {
        int nearest = 0;
        double best = 1e300;
        for (int k = 0; k < 3; ++k) {
          const double d = (res.next_state - env.sites()[k]).norm();
          if (d < best) {
            best = d;
            nearest = k;
          }
        }
        CHECK(best < TrimodalPoint::kArrivalRadius);
        sites_hit.insert(nearest);
      }
    }
    CHECK(done);  // noisy straight-line walk always arrives within the limit
  }
  CHECK(sites_hit.size() == 3);
  // site choice is uniform
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(counts[k] / double(episodes) - 1.0 / 3.0) < 0.08);
}

TEST_CASE("trimodal: step delta norm never exceeds the speed limit") {
  TrimodalPoint env;
  Rng rng(13);
  env.reset(rng);
  for (int t = 0; t < 50; ++t) {
    const VectorXd before = env.state();
    const auto res = env.step(env.behavior_action(rng));
    CHECK((res.next_state - before).norm() <= TrimodalPoint::kMaxSpeed + 1e-12);
    if (res.done) break;
  }
}

TEST_CASE("gridmaze: unknown layout is a configuration error") {
  CHECK_THROWS_AS(GridMaze("spiral"), ConfigError);
  CHECK_THROWS_AS(make_env("gridmaze:spiral"), ConfigError);
  CHECK_THROWS_AS(make_env("no-such-env"), ConfigError);
}

TEST_CASE("gridmaze: wall collision leaves position and reward unchanged") {
  GridMaze env("tmaze");
  Rng rng(5);
  env.reset(rng);
  VectorXd near_wall = env.cell_center(0);
  near_wall(1) -= 0.4;  // just under the top wall of the corridor
  env.set_state(near_wall);
  env.set_goal(env.cell_center(5));
  const VectorXd before = env.state();
  VectorXd up(2);
  up << 0.0, -0.3;
  const auto res = env.step(up);
  CHECK(res.next_state == before);
  CHECK(res.reward == 0.0);
  CHECK_FALSE(res.done);
}

TEST_CASE("gridmaze: entering the goal cell gives reward 1 and done") {
  GridMaze env("tmaze");
  Rng rng(5);
  env.reset(rng);
  env.set_state(env.cell_center(1));
  env.set_goal(env.cell_center(2));
  VectorXd right(2);
  right << 0.35, 0.0;
  bool done = false;
  double reward = 0.0;
  for (int i = 0; i < 5 && !done; ++i) {
    const auto res = env.step(right);
    done = res.done;
    reward = res.reward;
  }
  CHECK(done);
  CHECK(reward == 1.0);
}

TEST_CASE("gridmaze: behavior covers at least 90% of free cells over 500 episodes") {
  GridMaze env("tmaze");
  Rng rng(17);
  std::set<int> visited;
  for (int e = 0; e < 500; ++e) {
    Rng ep = rng.stream("ep", e);
    env.reset(ep);
    bool done = false;
    for (int t = 0; t < env.descriptor().horizon_limit && !done; ++t) {
      const auto res = env.step(env.behavior_action(ep));
      visited.insert(env.cell_index(res.next_state(0), res.next_state(1)));
      done = res.done;
    }
  }
  CHECK(visited.size() >= std::size_t(0.9 * env.free_cell_count()));
}

TEST_CASE("collect_dataset: deterministic bytes, episode caps, replay oracle") {
  auto env = make_env("rw1d");
  const auto ds = data::collect_dataset(*env, 20, 99);
  CHECK(ds.episodes.size() == 20);
  for (const auto& ep : ds.episodes) {
    CHECK((ep.terminal || ep.timeout));
    CHECK(ep.length() <= 500);
    CHECK(ep.states.size() == ep.actions.size() + 1);
    CHECK(ep.rewards.size() == ep.actions.size());
  }

  const auto dir = std::filesystem::temp_directory_path() / "ldcq-ds-test";
  std::filesystem::create_directories(dir);
  data::save_dataset(dir / "a.jsonl", ds);
  auto env2 = make_env("rw1d");
  data::save_dataset(dir / "b.jsonl", data::collect_dataset(*env2, 20, 99));
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));  // byte-identical

  // replay oracle: stored actions reproduce stored states through the env
  auto env3 = make_env("rw1d");
  for (const auto& ep : ds.episodes) {
    env3->set_state(ep.states[0]);
    for (int t = 0; t < ep.length(); ++t) {
      const auto res = env3->step(ep.actions[t]);
      CHECK((res.next_state - ep.states[t + 1]).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(res.reward == ep.rewards[t]);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset serialization round-trips losslessly") {
  auto env = make_env("trimodal");
  const auto ds = data::collect_dataset(*env, 5, 4);
  const auto file = std::filesystem::temp_directory_path() / "ldcq-tri.jsonl";
  data::save_dataset(file, ds);
  const auto loaded = data::load_dataset(file);
  REQUIRE(loaded.episodes.size() == ds.episodes.size());
  CHECK(loaded.env.name == ds.env.name);
  CHECK(loaded.env.action_high == ds.env.action_high);
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    CHECK(loaded.episodes[e].terminal == ds.episodes[e].terminal);
    CHECK(loaded.episodes[e].rewards == ds.episodes[e].rewards);
    for (std::size_t t = 0; t < ds.episodes[e].states.size(); ++t)
      CHECK(loaded.episodes[e].states[t] == ds.episodes[e].states[t]);  // bitwise
  }
  std::filesystem::remove(file);
}

TEST_CASE("slice_snippets: enumeration oracle for L=5, H=2, stride=1") {
  data::Dataset ds;
  ds.env.name = "unit";
  ds.env.state_dim = 1;
  ds.env.action_dim = 1;
  ds.env.horizon_limit = 10;
  data::EpisodeTrajectory ep;
  for (int t = 0; t <= 5; ++t) ep.states.push_back(v1(t));
  for (int t = 0; t < 5; ++t) {
    ep.actions.push_back(v1(10 + t));
    ep.rewards.push_back(t);
  }
  ep.terminal = true;
  ds.episodes.push_back(ep);

  const auto sn = data::slice_snippets(ds, 2, 1);
  REQUIRE(sn.size() == 5);  // starts 0..4
  for (int i = 0; i < 4; ++i) {
    CHECK(sn[i].steps_valid == 2);
    CHECK(sn[i].next_state(0) == i + 2);
    CHECK(sn[i].states[0](0) == i);
    CHECK(sn[i].actions[1](0) == 11 + i);
  }
  // tail window: one valid step, padded with zeros
  CHECK(sn[4].steps_valid == 1);
  CHECK(sn[4].terminal_within);
  CHECK(sn[4].next_state(0) == 5);
  CHECK(sn[4].rewards[1] == 0.0);
  CHECK(sn[4].actions[1](0) == 0.0);
  // full window ending exactly at the terminal step is terminal too
  CHECK(sn[3].terminal_within);
  CHECK_FALSE(sn[0].terminal_within);
}

TEST_CASE("slice_snippets: H=1 windows are single transitions") {
  auto env = make_env("rw1d");
  const auto ds = data::collect_dataset(*env, 3, 21);
  const auto sn = data::slice_snippets(ds, 1, 1);
  std::size_t total = 0;
  for (const auto& ep : ds.episodes) total += ep.actions.size();
  CHECK(sn.size() == total);
  for (const auto& s : sn) {
    CHECK(s.steps_valid == 1);
    CHECK(s.states.size() == 1);
  }
}

TEST_CASE("slice_snippets: stride=H tiles episodes disjointly") {
  data::Dataset ds;
  ds.env.state_dim = 1;
  ds.env.action_dim = 1;
  data::EpisodeTrajectory ep;
  for (int t = 0; t <= 6; ++t) ep.states.push_back(v1(t));
  for (int t = 0; t < 6; ++t) {
    ep.actions.push_back(v1(0));
    ep.rewards.push_back(1);
  }
  ep.timeout = true;
  ds.episodes.push_back(ep);
  const auto sn = data::slice_snippets(ds, 3, 3);
  REQUIRE(sn.size() == 2);
  CHECK(sn[0].start == 0);
  CHECK(sn[1].start == 3);
  CHECK(sn[0].steps_valid == 3);
  CHECK(sn[1].steps_valid == 3);
  // full window ending at a timeout boundary does not suppress bootstrap
  CHECK_FALSE(sn[1].terminal_within);
}

TEST_CASE("slice_snippets: window count matches the closed form") {
  auto env = make_env("trimodal");
  const auto ds = data::collect_dataset(*env, 20, 8);
  for (const int H : {1, 4, 7}) {
    for (const int stride : {1, 2, 3}) {
      const auto sn = data::slice_snippets(ds, H, stride);
      std::size_t expect = 0;
      for (const auto& ep : ds.episodes)
        expect += static_cast<std::size_t>((ep.length() - 1) / stride) + 1;
      CHECK(sn.size() == expect);
    }
  }
}

TEST_CASE("slice_snippets: horizon above every episode length is an error") {
  data::Dataset ds;
  ds.env.state_dim = 1;
  ds.env.action_dim = 1;
  data::EpisodeTrajectory ep;
  for (int t = 0; t <= 2; ++t) ep.states.push_back(v1(t));
  for (int t = 0; t < 2; ++t) {
    ep.actions.push_back(v1(0));
    ep.rewards.push_back(0);
  }
  ep.terminal = true;
  ds.episodes.push_back(ep);
  CHECK_THROWS_AS(data::slice_snippets(ds, 3, 1), EmptySlice);
  CHECK_THROWS_AS(data::slice_snippets(ds, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(data::slice_snippets(ds, 1, 0), std::invalid_argument);
}

TEST_CASE("snippet replay: every snippet chain steps through the env exactly") {
  auto env = make_env("gridmaze");
  const auto ds = data::collect_dataset(*env, 10, 31);
  const auto sn = data::slice_snippets(ds, 5, 2);
  auto replay_env = make_env("gridmaze");
  for (const auto& s : sn) {
    replay_env->set_goal(ds.episodes[s.episode].goal);
    replay_env->set_state(s.states[0]);
    for (int t = 0; t < s.steps_valid; ++t) {
      const auto res = replay_env->step(s.actions[t]);
      const auto& expect = t + 1 < s.steps_valid ? s.states[t + 1] : s.next_state;
      CHECK((res.next_state - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("discounted_return") {
  CHECK(data::discounted_return({1, 0, 2}, 3, 0.5) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(data::discounted_return({3, 7, 9}, 3, 0.0) == 3.0);
  CHECK_THROWS_AS(data::discounted_return({1}, 1, 1.0), std::invalid_argument);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r;
    for (int i = 0; i < 10; ++i) r.push_back(rng.normal());
    const double gamma = rng.uniform(0.0, 0.999);
    const int n = static_cast<int>(rng.uniform_int(0, 10));
    CHECK(data::discounted_return(r, n, gamma) ==
          doctest::Approx(testsupport::loop_discounted_sum(r, n, gamma)).epsilon(1e-12));
  }
}

TEST_CASE("rw1d dataset has the support gap") {
  auto env = make_env("rw1d");
  const auto ds = data::collect_dataset(*env, 10, 77);
  for (const auto& ep : ds.episodes)
    for (const auto& a : ep.actions) CHECK(std::abs(a(0)) >= 0.8);
}
