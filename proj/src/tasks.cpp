#include "scil/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace scil {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

// Signed difference folded into [-pi, pi].
double angle_between(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d > std::numbers::pi) d -= kTwoPi;
  if (d < -std::numbers::pi) d += kTwoPi;
  return std::abs(d);
}

int read_button(double v, const char* name) {
  if (v != 0.0 && v != 1.0) throw std::invalid_argument(std::string("dodgeaim: ") + name + " must be 0 or 1");
  return static_cast<int>(v);
}

}  // namespace

GridAction gridchase_expert(const GridChaseState& s) {
  const int dx = s.target_x - s.agent_x;
  const int dy = s.target_y - s.agent_y;
  if (dx == 0 && dy == 0) return GridAction::Stay;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0 ? GridAction::Right : GridAction::Left;
  return dy > 0 ? GridAction::Down : GridAction::Up;
}

DodgeAimAction dodgeaim_expert(const DodgeAimState& s) {
  DodgeAimAction a;
  a.stick_x = std::cos(s.target_angle);
  a.stick_y = std::sin(s.target_angle);
  a.dodge = (s.hazard_active && s.hazard_distance < Task::kDodgeWindow) ? 1 : 0;
  a.fire = a.dodge == 0 ? 1 : 0;
  return a;
}

std::string task_name(TaskKind kind) { return kind == TaskKind::GridChase ? "gridchase" : "dodgeaim"; }

TaskKind task_from_name(const std::string& name) {
  if (name == "gridchase") return TaskKind::GridChase;
  if (name == "dodgeaim") return TaskKind::DodgeAim;
  throw std::invalid_argument("unknown env '" + name + "' (expected gridchase or dodgeaim)");
}

Task::Task(TaskKind kind, std::uint64_t seed) : kind_(kind), rng_(seed) {}

ActionSpec Task::action_spec(TaskKind kind) {
  if (kind == TaskKind::GridChase) return ActionSpec({DiscreteDim{5}});
  return ActionSpec({ContinuousDim{-1.0, 1.0, 5}, ContinuousDim{-1.0, 1.0, 5}, DiscreteDim{2}, DiscreteDim{2}});
}

int Task::obs_dim(TaskKind kind) { return kind == TaskKind::GridChase ? 4 + 16 : 4; }
int Task::obs_dim() const { return obs_dim(kind_); }

TaskState Task::reset() {
  if (kind_ == TaskKind::GridChase) {
    std::uniform_int_distribution<int> cell(0, kGridSize * kGridSize - 1);
    const int a = cell(rng_);
    int t = cell(rng_);
    while (t == a) t = cell(rng_);
    return GridChaseState{a % kGridSize, a / kGridSize, t % kGridSize, t / kGridSize, 0};
  }
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  DodgeAimState s;
  s.target_angle = wrap_angle(angle(rng_));
  return s;
}

Eigen::VectorXd Task::observe(const TaskState& state) {
  if (const auto* g = std::get_if<GridChaseState>(&state)) {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(obs_dim());
    const double scale = 1.0 / (kGridSize - 1);
    obs << g->agent_x * scale, g->agent_y * scale, g->target_x * scale, g->target_y * scale,
        Eigen::VectorXd::Zero(16);
    // 4x4 coarse occupancy: +1 for the agent's cell, -1 for the target's.
    obs(4 + (g->agent_y / 2) * 4 + g->agent_x / 2) += 1.0;
    obs(4 + (g->target_y / 2) * 4 + g->target_x / 2) -= 1.0;
    return obs;
  }
  const auto& d = std::get<DodgeAimState>(state);
  std::normal_distribution<double> noise(0.0, kObsNoise);
  Eigen::VectorXd obs(4);
  const double nx = noise(rng_);
  const double ny = noise(rng_);
  obs << std::cos(d.target_angle) + nx, std::sin(d.target_angle) + ny, d.hazard_distance / 10.0,
      d.hazard_active ? 1.0 : 0.0;
  return obs;
}

StepOutcome Task::step(const TaskState& state, const Eigen::Ref<const Eigen::VectorXd>& action) {
  if (const auto* g = std::get_if<GridChaseState>(&state)) {
    if (action.size() != 1) throw std::invalid_argument("gridchase: action must have 1 dimension");
    const double a = action(0);
    if (a != std::floor(a) || a < 0.0 || a > 4.0) throw std::invalid_argument("gridchase: action must be 0..4");
    GridChaseState next = *g;
    switch (static_cast<GridAction>(static_cast<int>(a))) {
      case GridAction::Up: next.agent_y -= 1; break;
      case GridAction::Down: next.agent_y += 1; break;
      case GridAction::Left: next.agent_x -= 1; break;
      case GridAction::Right: next.agent_x += 1; break;
      case GridAction::Stay: break;
    }
    next.agent_x = std::clamp(next.agent_x, 0, kGridSize - 1);
    next.agent_y = std::clamp(next.agent_y, 0, kGridSize - 1);
    next.steps_elapsed += 1;
    StepOutcome out{next, false, 0.0, false};
    if (next.agent_x == next.target_x && next.agent_y == next.target_y) {
      out.done = true;
      out.score_delta = 1.0;
      out.success = true;
    } else if (next.steps_elapsed >= kGridHorizon) {
      out.done = true;
    }
    return out;
  }

  const auto& s = std::get<DodgeAimState>(state);
  if (action.size() != 4) throw std::invalid_argument("dodgeaim: action must have 4 dimensions");
  const double sx = action(0), sy = action(1);
  if (!std::isfinite(sx) || !std::isfinite(sy) || std::abs(sx) > 1.0 || std::abs(sy) > 1.0) {
    throw std::invalid_argument("dodgeaim: stick components must lie in [-1, 1]");
  }
  const int dodge = read_button(action(2), "dodge_button");
  const int fire = read_button(action(3), "fire_button");

  DodgeAimState next = s;
  StepOutcome out;
  out.score_delta = 0.0;
  if (fire == 1 && (sx != 0.0 || sy != 0.0) && angle_between(std::atan2(sy, sx), s.target_angle) < kAimTolerance) {
    out.score_delta += 1.0;
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    next.target_angle = wrap_angle(angle(rng_));
  }
  if (s.hazard_active) {
    if (dodge == 1 && s.hazard_distance < kDodgeWindow) {
      next.hazard_active = false;
      next.hazard_distance = 0.0;
    } else {
      next.hazard_distance = s.hazard_distance - kHazardSpeed;
      if (next.hazard_distance <= 0.0) {
        // Hit: the episode ends and its score drops to zero.
        next.hazard_distance = 0.0;
        next.steps_elapsed += 1;
        out.score_delta = -s.score;
        next.score = 0.0;
        out.next = next;
        out.done = true;
        out.success = false;
        return out;
      }
    }
  } else {
    std::bernoulli_distribution spawn(kHazardSpawnProb);
    if (spawn(rng_)) {
      std::uniform_real_distribution<double> distance(kHazardMinDistance, kHazardMaxDistance);
      next.hazard_active = true;
      next.hazard_distance = distance(rng_);
    }
  }
  next.steps_elapsed += 1;
  next.score += out.score_delta;
  out.next = next;
  if (next.steps_elapsed >= kDodgeHorizon) {
    out.done = true;
    out.success = true;
  }
  return out;
}

Eigen::VectorXd Task::expert_action(const TaskState& state) const {
  if (const auto* g = std::get_if<GridChaseState>(&state)) {
    Eigen::VectorXd a(1);
    a << static_cast<double>(static_cast<int>(gridchase_expert(*g)));
    return a;
  }
  const auto e = dodgeaim_expert(std::get<DodgeAimState>(state));
  Eigen::VectorXd a(4);
  a << e.stick_x, e.stick_y, e.dodge, e.fire;
  return a;
}

Eigen::VectorXd Task::random_action(std::mt19937_64& rng) const {
  if (kind_ == TaskKind::GridChase) {
    std::uniform_int_distribution<int> pick(0, 4);
    Eigen::VectorXd a(1);
    a << pick(rng);
    return a;
  }
  std::uniform_real_distribution<double> stick(-1.0, 1.0);
  std::bernoulli_distribution button(0.5);
  Eigen::VectorXd a(4);
  const double sx = stick(rng);
  const double sy = stick(rng);
  const bool dodge = button(rng);
  const bool fire = button(rng);
  a << sx, sy, dodge ? 1.0 : 0.0, fire ? 1.0 : 0.0;
  return a;
}

DemonstrationSet generate_dataset(TaskKind kind, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("generate_dataset: n_episodes must be >= 1");
  Task task(kind, seed);
  std::vector<Eigen::VectorXd> obs_rows, action_rows;
  DemonstrationSet set;
  set.env = task.name();
  set.spec = task.action_spec();
  set.seed = seed;
  for (int ep = 0; ep < n_episodes; ++ep) {
    set.episode_starts.push_back(obs_rows.size());
    TaskState state = task.reset();
    for (;;) {
      Eigen::VectorXd action = task.expert_action(state);
      obs_rows.push_back(task.observe(state));
      action_rows.push_back(action);
      set.states.push_back(state);
      const auto outcome = task.step(state, action);
      state = outcome.next;
      if (outcome.done) break;
    }
  }
  const auto n = static_cast<Eigen::Index>(obs_rows.size());
  set.observations.resize(n, task.obs_dim());
  set.actions.resize(n, static_cast<Eigen::Index>(set.spec.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    set.observations.row(i) = obs_rows[i].transpose();
    set.actions.row(i) = action_rows[i].transpose();
  }
  return set;
}

ScoreStats evaluate_agent(TaskKind kind, const Agent& agent, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  Task task(kind, seed);
  ScoreStats stats;
  int successes = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    TaskState state = task.reset();
    double score = 0.0;
    for (;;) {
      const Eigen::VectorXd obs = task.observe(state);
      const auto outcome = task.step(state, agent(obs, state));
      score += outcome.score_delta;
      state = outcome.next;
      if (outcome.done) {
        successes += outcome.success ? 1 : 0;
        break;
      }
    }
    stats.scores.push_back(score);
  }
  const Eigen::Map<const Eigen::VectorXd> s(stats.scores.data(), static_cast<Eigen::Index>(stats.scores.size()));
  stats.mean = s.mean();
  stats.stddev = std::sqrt((s.array() - stats.mean).square().mean());
  stats.success_rate = static_cast<double>(successes) / n_episodes;
  return stats;
}

ScoreStats evaluate_expert(TaskKind kind, int n_episodes, std::uint64_t seed) {
  const Task reference(kind, 0);
  return evaluate_agent(
      kind, [&](const Eigen::VectorXd&, const TaskState& state) { return reference.expert_action(state); }, n_episodes,
      seed);
}

ScoreStats evaluate_random(TaskKind kind, int n_episodes, std::uint64_t seed) {
  const Task reference(kind, 0);
  // Separate stream from the environment's own generator.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return evaluate_agent(
      kind, [&](const Eigen::VectorXd&, const TaskState&) { return reference.random_action(rng); }, n_episodes, seed);
}

double normalized_improvement(double mean, double random_mean) {
  const double denom = std::abs(random_mean) > 0.0 ? std::abs(random_mean) : 1.0;
  return 100.0 * (mean - random_mean) / denom;
}

}  // namespace scil
