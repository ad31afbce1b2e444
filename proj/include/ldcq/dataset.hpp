#pragma once

#include <filesystem>
#include <vector>

#include "ldcq/env.hpp"

namespace ldcq::data {

using Eigen::VectorXd;

struct EpisodeTrajectory {
  std::vector<VectorXd> states;   // length L+1
  std::vector<VectorXd> actions;  // length L
  std::vector<double> rewards;    // length L
  bool terminal = false;          // env signalled done
  bool timeout = false;           // horizon limit reached
  VectorXd goal;                  // empty unless the env has goals

  int length() const { return static_cast<int>(actions.size()); }
};

// H-step window of an episode. Tail windows keep their valid steps; padding
// repeats the final reached state with zero actions and zero rewards.
struct SkillSnippet {
  std::vector<VectorXd> states;   // H entries
  std::vector<VectorXd> actions;  // H entries
  std::vector<double> rewards;    // H entries, zero beyond steps_valid
  VectorXd next_state;            // state after the last valid step
  bool terminal_within = false;
  int steps_valid = 0;
  int episode = 0;
  int start = 0;

  bool full(int H) const { return steps_valid == H; }
};

struct Dataset {
  envs::EnvDescriptor env;
  std::vector<EpisodeTrajectory> episodes;

  std::size_t transition_count() const;
};

// Rolls out `episodes` episodes of the env's scripted behavior policy.
// Per-episode substreams make the result independent of episode ordering.
Dataset collect_dataset(envs::Env& env, int episodes, std::uint64_t seed);

// JSON-lines: a header line with the descriptor, then one episode per line.
void save_dataset(const std::filesystem::path& file, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& file);

// Windows start at multiples of `stride` within each episode and never cross
// episode boundaries. Windows that run into the episode end are kept with
// steps_valid < H; terminal_within marks windows that either contain the
// episode's terminal step or were cut short by the episode end. Throws
// EmptySlice when no full window exists anywhere.
std::vector<SkillSnippet> slice_snippets(const Dataset& ds, int H, int stride);

// sum_{k < steps_valid} gamma^k r_k
double discounted_return(const std::vector<double>& rewards, int steps_valid,
                         double gamma);

}  // namespace ldcq::data
