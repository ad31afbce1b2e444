#pragma once

#include <filesystem>
#include <string>

#include "ldcq/planner.hpp"

namespace ldcq::harness {

struct EvalOptions {
  std::string mode = "ldcq";  // ldcq | bcq | ldgc | ldcp | behavior
  int episodes = 100;
  std::uint64_t seed = 0;  // 0: derived from the top-level seed
  int candidates = 16;
  bool use_min = false;
  bool sample_actions = false;
};

// Full experiment description. Field defaults are the paper-scale
// hyperparameters; desk_default() swaps in the desk-scale profile and
// per-environment presets sized for laptop CPUs.
struct ExperimentConfig {
  std::string env = "rw1d";
  std::uint64_t seed = 1;
  std::string out = "runs/run";
  int horizon = 10;
  int data_episodes = 100;
  std::string data_file;  // empty: <out>/dataset.jsonl
  bool paper_scale = false;

  vae::VaeConfig vae;
  diffusion::PriorTrainConfig prior;
  int prior_time_dim = 256;
  int prior_enc_hidden = 128;
  std::vector<int> prior_blocks = {128, 32, 16, 8, 16, 32, 128};
  diffusion::GuidanceSpec guidance;
  qlearn::LdcqConfig q;
  std::string q_candidate_prior = "diffusion";  // diffusion | gaussian
  plan::WorldModelConfig wm;
  int plan_candidates = 6;
  int plan_depth = 2;
  EvalOptions eval;

  // desk-scale profile for a named environment
  static ExperimentConfig desk_default(const std::string& env_name);
  // full Table-scale hyperparameters
  void apply_paper_scale();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  // every key in deterministic order, fully resolved
  std::string serialize() const;

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  std::uint64_t eval_seed() const;
  nn::DenoiserSpec denoiser_spec() const;
  qlearn::LdcqConfig q_config() const;  // q with guidance/horizon folded in
};

}  // namespace ldcq::harness
