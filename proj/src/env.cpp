#include "ldcq/env.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

#include "ldcq/errors.hpp"

namespace ldcq::envs {

namespace {

VectorXd vec1(double v) {
  VectorXd x(1);
  x(0) = v;
  return x;
}

VectorXd vec2(double a, double b) {
  VectorXd x(2);
  x << a, b;
  return x;
}

}  // namespace

nlohmann::json EnvDescriptor::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["state_dim"] = state_dim;
  j["action_dim"] = action_dim;
  j["action_low"] = std::vector<double>(action_low.data(), action_low.data() + action_low.size());
  j["action_high"] =
      std::vector<double>(action_high.data(), action_high.data() + action_high.size());
  j["horizon_limit"] = horizon_limit;
  j["has_goal"] = has_goal;
  j["goal_dim"] = goal_dim;
  return j;
}

EnvDescriptor EnvDescriptor::from_json(const nlohmann::json& j) {
  EnvDescriptor d;
  d.name = j.at("name").get<std::string>();
  d.state_dim = j.at("state_dim").get<int>();
  d.action_dim = j.at("action_dim").get<int>();
  auto lo = j.at("action_low").get<std::vector<double>>();
  auto hi = j.at("action_high").get<std::vector<double>>();
  d.action_low = Eigen::Map<VectorXd>(lo.data(), lo.size());
  d.action_high = Eigen::Map<VectorXd>(hi.data(), hi.size());
  d.horizon_limit = j.at("horizon_limit").get<int>();
  d.has_goal = j.at("has_goal").get<bool>();
  d.goal_dim = j.at("goal_dim").get<int>();
  return d;
}

// ---------------------------------------------------------------- rw1d ----

RandomWalk1d::RandomWalk1d() {
  desc_.name = "rw1d";
  desc_.state_dim = 1;
  desc_.action_dim = 1;
  desc_.action_low = vec1(-1.0);
  desc_.action_high = vec1(1.0);
  desc_.horizon_limit = 500;
  state_ = vec1(0.0);
}

VectorXd RandomWalk1d::reset(Rng&) {
  state_ = vec1(0.0);
  return state_;
}

StepResult RandomWalk1d::step(const VectorXd& action) {
  if (action.size() != 1) throw std::invalid_argument("rw1d: action must be 1-d");
  const double a = action(0);
  if (std::abs(a) > 1.0 + 1e-12)
    throw std::invalid_argument("rw1d: action out of [-1, 1]");
  const double next = std::clamp(state_(0) + a, -10.0, 10.0);
  state_ = vec1(next);
  const bool hit = std::abs(next) >= 10.0;
  return {state_, hit ? 10.0 : -1.0, hit};
}

VectorXd RandomWalk1d::behavior_action(Rng& rng) {
  const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return vec1(side * rng.uniform(0.8, 1.0));
}

// ------------------------------------------------------------ trimodal ----

TrimodalPoint::TrimodalPoint() {
  desc_.name = "trimodal";
  desc_.state_dim = 2;
  desc_.action_dim = 2;
  desc_.action_low = vec2(-kMaxSpeed, -kMaxSpeed);
  desc_.action_high = vec2(kMaxSpeed, kMaxSpeed);
  desc_.horizon_limit = 60;
  const double radius = 6.0;
  for (int k = 0; k < 3; ++k) {
    const double ang = M_PI / 2.0 + k * 2.0 * M_PI / 3.0;
    sites_.push_back(vec2(radius * std::cos(ang), radius * std::sin(ang)));
  }
  state_ = vec2(0.0, 0.0);
}

VectorXd TrimodalPoint::reset(Rng& rng) {
  state_ = vec2(0.0, 0.0);
  chosen_site_ = static_cast<int>(rng.uniform_int(0, 2));
  return state_;
}

StepResult TrimodalPoint::step(const VectorXd& action) {
  if (action.size() != 2) throw std::invalid_argument("trimodal: action must be 2-d");
  for (int i = 0; i < 2; ++i)
    if (std::abs(action(i)) > kMaxSpeed + 1e-12)
      throw std::invalid_argument("trimodal: action component out of bounds");
  VectorXd a = action;
  const double n = a.norm();
  if (n > kMaxSpeed) a *= kMaxSpeed / n;
  state_ += a;
  for (const auto& site : sites_)
    if ((state_ - site).norm() < kArrivalRadius) return {state_, 1.0, true};
  return {state_, 0.0, false};
}

VectorXd TrimodalPoint::behavior_action(Rng& rng) {
  const VectorXd& target = sites_[chosen_site_];
  VectorXd dir = target - state_;
  const double dist = dir.norm();
  if (dist > 1e-9) dir /= dist;
  VectorXd a = 0.3 * dir + 0.06 * rng.normal_vector(2);
  const double n = a.norm();
  if (n > kMaxSpeed) a *= kMaxSpeed / n;
  for (int i = 0; i < 2; ++i) a(i) = std::clamp(a(i), -kMaxSpeed, kMaxSpeed);
  return a;
}

// ------------------------------------------------------------ gridmaze ----

namespace {

// Two long corridors joined by a stem: T-intersections at both ends of the
// stem, 20 free cells total.
const std::vector<std::string> kTmazeLayout = {
    "###########",
    "#.........#",
    "#####.#####",
    "#####.#####",
    "#.........#",
    "###########",
};

}  // namespace

GridMaze::GridMaze(const std::string& layout_id) {
  if (layout_id != "tmaze")
    throw ConfigError("gridmaze: unknown layout '" + layout_id + "'");
  grid_ = kTmazeLayout;
  height_ = static_cast<int>(grid_.size());
  width_ = static_cast<int>(grid_[0].size());
  cell_to_free_.assign(width_ * height_, -1);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      if (grid_[y][x] == '.') {
        cell_to_free_[y * width_ + x] = static_cast<int>(free_cells_.size());
        free_cells_.push_back({x, y});
      }
  desc_.name = "gridmaze";
  desc_.state_dim = 2;
  desc_.action_dim = 2;
  desc_.action_low = vec2(-kMaxStep, -kMaxStep);
  desc_.action_high = vec2(kMaxStep, kMaxStep);
  desc_.horizon_limit = 60;
  desc_.has_goal = true;
  desc_.goal_dim = 2;
  state_ = cell_center(0);
  goal_ = cell_center(free_cell_count() - 1);
}

bool GridMaze::is_free(double x, double y) const {
  const int cx = static_cast<int>(std::floor(x));
  const int cy = static_cast<int>(std::floor(y));
  if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_) return false;
  return grid_[cy][cx] == '.';
}

int GridMaze::cell_at(double x, double y) const {
  const int cx = static_cast<int>(std::floor(x));
  const int cy = static_cast<int>(std::floor(y));
  if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_) return -1;
  return cy * width_ + cx;
}

int GridMaze::cell_index(double x, double y) const {
  const int c = cell_at(x, y);
  return c < 0 ? -1 : cell_to_free_[c];
}

VectorXd GridMaze::cell_center(int free_cell_idx) const {
  const auto& [x, y] = free_cells_.at(free_cell_idx);
  return vec2(x + 0.5, y + 0.5);
}

VectorXd GridMaze::junction() const {
  // top end of the stem: three open directions
  return vec2(5.5, 1.5);
}

VectorXd GridMaze::reset(Rng& rng) {
  const int start = static_cast<int>(rng.uniform_int(0, free_cell_count() - 1));
  int goal = start;
  while (goal == start) goal = static_cast<int>(rng.uniform_int(0, free_cell_count() - 1));
  state_ = cell_center(start) + 0.1 * rng.normal_vector(2).cwiseMax(-1.0).cwiseMin(1.0);
  if (!is_free(state_(0), state_(1))) state_ = cell_center(start);
  goal_ = cell_center(goal);
  waypoint_path_.clear();
  return state_;
}

StepResult GridMaze::step(const VectorXd& action) {
  if (action.size() != 2) throw std::invalid_argument("gridmaze: action must be 2-d");
  for (int i = 0; i < 2; ++i)
    if (std::abs(action(i)) > kMaxStep + 1e-12)
      throw std::invalid_argument("gridmaze: action component out of bounds");
  const VectorXd target = state_ + action;
  const VectorXd mid = state_ + 0.5 * action;
  if (is_free(target(0), target(1)) && is_free(mid(0), mid(1))) state_ = target;
  const bool at_goal = cell_at(state_(0), state_(1)) == cell_at(goal_(0), goal_(1));
  return {state_, at_goal ? 1.0 : 0.0, at_goal};
}

std::vector<int> GridMaze::bfs_path(int from_cell, int to_cell) const {
  std::vector<int> prev(width_ * height_, -2);
  std::deque<int> frontier{from_cell};
  prev[from_cell] = -1;
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  while (!frontier.empty()) {
    const int c = frontier.front();
    frontier.pop_front();
    if (c == to_cell) break;
    const int cx = c % width_, cy = c / width_;
    for (int k = 0; k < 4; ++k) {
      const int nx = cx + dx[k], ny = cy + dy[k];
      if (nx < 0 || ny < 0 || nx >= width_ || ny >= height_) continue;
      const int nc = ny * width_ + nx;
      if (grid_[ny][nx] != '.' || prev[nc] != -2) continue;
      prev[nc] = c;
      frontier.push_back(nc);
    }
  }
  std::vector<int> path;
  for (int c = to_cell; c != -1; c = prev[c]) {
    if (c == -2) return {};  // unreachable; cannot happen on a connected maze
    path.push_back(cell_to_free_[c]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

VectorXd GridMaze::behavior_action(Rng& rng) {
  const int here = cell_index(state_(0), state_(1));
  if (!waypoint_path_.empty() && waypoint_path_.front() == here)
    waypoint_path_.erase(waypoint_path_.begin());
  if (waypoint_path_.empty()) {
    int waypoint = here;
    while (waypoint == here)
      waypoint = static_cast<int>(rng.uniform_int(0, free_cell_count() - 1));
    const auto& [hx, hy] = free_cells_[here];
    const auto& [wx, wy] = free_cells_[waypoint];
    waypoint_path_ = bfs_path(hy * width_ + hx, wy * width_ + wx);
    if (!waypoint_path_.empty() && waypoint_path_.front() == here)
      waypoint_path_.erase(waypoint_path_.begin());
  }
  const VectorXd target =
      waypoint_path_.empty() ? state_ : cell_center(waypoint_path_.front());
  VectorXd dir = target - state_;
  const double dist = dir.norm();
  if (dist > 1e-9) dir /= dist;
  VectorXd a = 0.28 * dir + 0.05 * rng.normal_vector(2);
  for (int i = 0; i < 2; ++i) a(i) = std::clamp(a(i), -kMaxStep, kMaxStep);
  return a;
}

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "rw1d") return std::make_unique<RandomWalk1d>();
  if (name == "trimodal") return std::make_unique<TrimodalPoint>();
  if (name == "gridmaze") return std::make_unique<GridMaze>("tmaze");
  if (name.rfind("gridmaze:", 0) == 0)
    return std::make_unique<GridMaze>(name.substr(9));
  throw ConfigError("make_env: unknown environment '" + name + "'");
}

}  // namespace ldcq::envs
