#include "ldcq/dataset.hpp"

#include <fstream>

#include "ldcq/errors.hpp"

namespace ldcq::data {

namespace {

nlohmann::json vec_to_json(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd vec_from_json(const nlohmann::json& j) {
  auto data = j.get<std::vector<double>>();
  return Eigen::Map<VectorXd>(data.data(), data.size());
}

}  // namespace

std::size_t Dataset::transition_count() const {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.actions.size();
  return n;
}

Dataset collect_dataset(envs::Env& env, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("collect_dataset: episodes >= 1");
  Dataset ds;
  ds.env = env.descriptor();
  const Rng root(seed);
  for (int e = 0; e < episodes; ++e) {
    Rng ep_rng = root.stream("episode", static_cast<std::uint64_t>(e));
    EpisodeTrajectory traj;
    traj.states.push_back(env.reset(ep_rng));
    if (ds.env.has_goal) traj.goal = env.goal();
    for (int t = 0; t < ds.env.horizon_limit; ++t) {
      VectorXd a = env.behavior_action(ep_rng);
      auto [next, reward, done] = env.step(a);
      traj.actions.push_back(std::move(a));
      traj.rewards.push_back(reward);
      traj.states.push_back(next);
      if (done) {
        traj.terminal = true;
        break;
      }
    }
    if (!traj.terminal && traj.length() == ds.env.horizon_limit) traj.timeout = true;
    ds.episodes.push_back(std::move(traj));
  }
  return ds;
}

void save_dataset(const std::filesystem::path& file, const Dataset& ds) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("save_dataset: cannot write " + file.string());
  nlohmann::json header;
  header["format"] = "ldcq-dataset";
  header["version"] = 1;
  header["env"] = ds.env.to_json();
  header["episodes"] = ds.episodes.size();
  out << header.dump() << "\n";
  for (const auto& ep : ds.episodes) {
    nlohmann::json j;
    auto states = nlohmann::json::array();
    for (const auto& s : ep.states) states.push_back(vec_to_json(s));
    auto actions = nlohmann::json::array();
    for (const auto& a : ep.actions) actions.push_back(vec_to_json(a));
    j["states"] = std::move(states);
    j["actions"] = std::move(actions);
    j["rewards"] = ep.rewards;
    j["terminal"] = ep.terminal;
    j["timeout"] = ep.timeout;
    if (ep.goal.size() > 0) j["goal"] = vec_to_json(ep.goal);
    out << j.dump() << "\n";
  }
}

Dataset load_dataset(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("load_dataset: cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_dataset: empty file " + file.string());
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("format", "") != "ldcq-dataset")
    throw std::runtime_error("load_dataset: unrecognized header in " + file.string());
  Dataset ds;
  ds.env = envs::EnvDescriptor::from_json(header.at("env"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    EpisodeTrajectory ep;
    for (const auto& s : j.at("states")) ep.states.push_back(vec_from_json(s));
    for (const auto& a : j.at("actions")) ep.actions.push_back(vec_from_json(a));
    ep.rewards = j.at("rewards").get<std::vector<double>>();
    ep.terminal = j.at("terminal").get<bool>();
    ep.timeout = j.at("timeout").get<bool>();
    if (j.contains("goal")) ep.goal = vec_from_json(j.at("goal"));
    ds.episodes.push_back(std::move(ep));
  }
  return ds;
}

std::vector<SkillSnippet> slice_snippets(const Dataset& ds, int H, int stride) {
  if (H < 1) throw std::invalid_argument("slice_snippets: H >= 1");
  if (stride < 1) throw std::invalid_argument("slice_snippets: stride >= 1");
  std::vector<SkillSnippet> out;
  bool any_full = false;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const auto& ep = ds.episodes[e];
    const int L = ep.length();
    for (int t = 0; t < L; t += stride) {
      SkillSnippet sn;
      sn.episode = static_cast<int>(e);
      sn.start = t;
      sn.steps_valid = std::min(H, L - t);
      sn.next_state = ep.states[t + sn.steps_valid];
      for (int k = 0; k < H; ++k) {
        if (k < sn.steps_valid) {
          sn.states.push_back(ep.states[t + k]);
          sn.actions.push_back(ep.actions[t + k]);
          sn.rewards.push_back(ep.rewards[t + k]);
        } else {
          sn.states.push_back(sn.next_state);
          sn.actions.push_back(VectorXd::Zero(ds.env.action_dim));
          sn.rewards.push_back(0.0);
        }
      }
      const bool covers_end = t + sn.steps_valid == L;
      sn.terminal_within = sn.steps_valid < H || (covers_end && ep.terminal);
      if (sn.steps_valid == H) any_full = true;
      out.push_back(std::move(sn));
    }
  }
  if (!any_full)
    throw EmptySlice("slice_snippets: horizon " + std::to_string(H) +
                     " exceeds every episode length; no full windows");
  return out;
}

double discounted_return(const std::vector<double>& rewards, int steps_valid,
                         double gamma) {
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("discounted_return: gamma in [0, 1)");
  double acc = 0.0, g = 1.0;
  const int n = std::min<int>(steps_valid, static_cast<int>(rewards.size()));
  for (int k = 0; k < n; ++k) {
    acc += g * rewards[k];
    g *= gamma;
  }
  return acc;
}

}  // namespace ldcq::data
