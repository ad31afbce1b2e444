#include "ldcq/planner.hpp"

#include <cmath>
#include <numeric>

namespace ldcq::plan {

using namespace ldcq::nn;

Mat WorldModel::predict(const Mat& states, const Mat& latents) const {
  if (states.cols() != latents.cols())
    throw std::invalid_argument("WorldModel::predict: batch size mismatch");
  Mat input(state_dim + z_dim, states.cols());
  input.topRows(state_dim) = states;
  input.bottomRows(z_dim) = latents;
  return mlp_forward_raw(spec, eta, "wm", input);
}

nn::Checkpoint WorldModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "world-model";
  ckpt.meta["state_dim"] = state_dim;
  ckpt.meta["z_dim"] = z_dim;
  ckpt.meta["hidden"] = spec.hidden.empty() ? 0 : spec.hidden[0];
  ckpt.bundles["eta"] = eta;
  return ckpt;
}

WorldModel WorldModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  WorldModel wm;
  wm.state_dim = ckpt.meta.at("state_dim").get<int>();
  wm.z_dim = ckpt.meta.at("z_dim").get<int>();
  const int hidden = ckpt.meta.at("hidden").get<int>();
  wm.spec = MlpSpec{wm.state_dim + wm.z_dim, {hidden, hidden}, wm.state_dim,
                    Act::ReLU,               Act::Linear,      false};
  wm.eta = ckpt.bundles.at("eta");
  return wm;
}

WorldModelTrainResult train_world_model(const qlearn::PrioritizedBuffer& buffer,
                                        const WorldModelConfig& cfg, std::uint64_t seed,
                                        const std::function<void(int, double)>& on_epoch) {
  if (buffer.size() == 0) throw std::invalid_argument("train_world_model: empty buffer");
  const int N = buffer.size();
  const int sdim = static_cast<int>(buffer.at(0).s.size());
  const int zdim = static_cast<int>(buffer.at(0).z.size());

  Rng root(seed);
  Rng init_rng = root.stream("wm.init");
  WorldModelTrainResult res;
  res.model.state_dim = sdim;
  res.model.z_dim = zdim;
  res.model.spec = MlpSpec{sdim + zdim, {cfg.hidden, cfg.hidden}, sdim,
                           Act::ReLU,   Act::Linear,              false};
  init_mlp(res.model.eta, "wm", res.model.spec, init_rng);

  // deterministic shuffle, then split off the validation tail
  Rng shuffle_rng = root.stream("wm.shuffle");
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  for (int i = N - 1; i > 0; --i)
    std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
  const int n_val = std::max(1, static_cast<int>(N * cfg.validation_fraction));
  const int n_train = std::max(1, N - n_val);

  Mat inputs(sdim + zdim, N), targets(sdim, N);
  for (int i = 0; i < N; ++i) {
    const auto& t = buffer.at(order[i]);
    inputs.col(i).head(sdim) = t.s;
    inputs.col(i).tail(zdim) = t.z;
    targets.col(i) = t.s_next;
  }

  OptState opt;
  opt.lr = cfg.lr;
  ParameterBundle snapshot = res.model.eta;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    int batches = 0;
    for (int at = 0; at < n_train; at += cfg.batch_size) {
      const int B = std::min(cfg.batch_size, n_train - at);
      Graph g;
      BoundParams p(g, res.model.eta);
      try {
        Var pred = mlp_forward(res.model.spec, p, "wm", g.input(inputs.middleCols(at, B)));
        Var loss = mean_all(sum_rows(square(sub(g.input(targets.middleCols(at, B)), pred))));
        g.backward(loss);
        adam_step(opt, res.model.eta, p.grads());
        epoch_loss += loss.value()(0, 0);
      } catch (const TrainingDivergence&) {
        res.model.eta = snapshot;
        res.diverged = true;
        return res;
      }
      ++batches;
    }
    epoch_loss /= std::max(1, batches);
    res.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
    if (!std::isfinite(epoch_loss)) {
      res.model.eta = snapshot;
      res.diverged = true;
      return res;
    }
    snapshot = res.model.eta;
  }

  if (N > n_train) {
    const Mat val_pred = res.model.predict(
        inputs.middleCols(n_train, N - n_train).topRows(sdim),
        inputs.middleCols(n_train, N - n_train).bottomRows(zdim));
    res.validation_mse =
        (val_pred - targets.middleCols(n_train, N - n_train)).squaredNorm() /
        static_cast<double>(N - n_train);
  }
  return res;
}

double euclidean_goal_cost(const VectorXd& s, const VectorXd& goal) {
  if (goal.size() > s.size())
    throw std::invalid_argument("euclidean_goal_cost: goal wider than state");
  return (s.head(goal.size()) - goal).norm();
}

void PlanSpec::validate() const {
  if (candidates < 1 || depth < 1)
    throw std::invalid_argument("PlanSpec: candidates and depth must be >= 1");
  if (goal.size() == 0) throw std::invalid_argument("PlanSpec: goal required");
}

PlanResult plan(const WorldModel& wm, qlearn::CandidateSampler& sampler,
                const VectorXd& state, const PlanSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.candidates;

  struct Node {
    VectorXd state;
    int root = -1;  // index of the level-1 latent this node descends from
  };
  std::vector<Node> level{{state, -1}};
  Mat level1_latents;
  PlanResult res;

  for (int d = 1; d <= spec.depth; ++d) {
    const int B = static_cast<int>(level.size());
    Mat conds(wm.state_dim, B);
    for (int j = 0; j < B; ++j) conds.col(j) = level[j].state;
    const Mat latents = sampler.sample(conds, n, rng);
    Mat states_rep(wm.state_dim, B * n);
    for (int j = 0; j < B; ++j)
      for (int i = 0; i < n; ++i) states_rep.col(j * n + i) = level[j].state;
    const Mat outcomes = wm.predict(states_rep, latents);
    res.model_calls += B * n;
    res.nodes_expanded += B * n;
    if (d == 1) level1_latents = latents;

    std::vector<Node> next(B * n);
    for (int j = 0; j < B; ++j)
      for (int i = 0; i < n; ++i) {
        const int c = j * n + i;
        next[c].state = outcomes.col(c);
        next[c].root = d == 1 ? i : level[j].root;
      }
    level = std::move(next);
  }

  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < level.size(); ++i) {
    const double cost = euclidean_goal_cost(level[i].state, spec.goal);
    if (cost < best_cost) {
      best_cost = cost;
      best = static_cast<int>(i);
    }
  }
  res.best_cost = best_cost;
  res.skill = level1_latents.col(level[best].root);
  return res;
}

std::vector<std::pair<VectorXd, VectorXd>> predict_outcomes(
    const WorldModel& wm, qlearn::CandidateSampler& sampler, const VectorXd& state,
    int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("predict_outcomes: n >= 1");
  const Mat latents = sampler.sample(state, n, rng);
  const Mat outcomes = wm.predict(state.replicate(1, n), latents);
  std::vector<std::pair<VectorXd, VectorXd>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back({latents.col(i), outcomes.col(i)});
  return out;
}

}  // namespace ldcq::plan
