#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "scil/action_labeling.hpp"

namespace scil {

// ---------------------------------------------------------------------------
// GridChase: move an agent on an 8x8 grid onto a target cell.

enum class GridAction : int { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };

struct GridChaseState {
  int agent_x = 0, agent_y = 0;
  int target_x = 0, target_y = 0;
  int steps_elapsed = 0;
  bool operator==(const GridChaseState&) const = default;
};

/// Step along the axis with the larger distance to the target; horizontal
/// wins ties; y grows downward.
GridAction gridchase_expert(const GridChaseState& state);

// ---------------------------------------------------------------------------
// DodgeAim: point a stick at a moving target and fire, dodging hazards.

struct DodgeAimState {
  double target_angle = 0.0;     // [0, 2*pi)
  double hazard_distance = 0.0;  // 0 while inactive
  bool hazard_active = false;
  int steps_elapsed = 0;
  double score = 0.0;            // episode score so far
  bool operator==(const DodgeAimState&) const = default;
};

struct DodgeAimAction {
  double stick_x = 0.0, stick_y = 0.0;
  int dodge = 0, fire = 0;
};

DodgeAimAction dodgeaim_expert(const DodgeAimState& state);

using TaskState = std::variant<GridChaseState, DodgeAimState>;

struct StepOutcome {
  TaskState next;
  bool done = false;
  double score_delta = 0.0;
  bool success = false;  // set on the terminal step of a successful episode
};

enum class TaskKind { GridChase, DodgeAim };

std::string task_name(TaskKind kind);
TaskKind task_from_name(const std::string& name);

/// Seeded environment. Copies carry their own generator state, so a copied
/// environment replays identically.
class Task {
 public:
  static constexpr int kGridSize = 8;
  static constexpr int kGridHorizon = 64;
  static constexpr int kDodgeHorizon = 200;
  static constexpr double kHazardSpeed = 0.5;
  static constexpr double kDodgeWindow = 2.0;
  static constexpr double kAimTolerance = 0.2;
  static constexpr double kObsNoise = 0.05;
  static constexpr double kHazardSpawnProb = 0.08;
  static constexpr double kHazardMinDistance = 4.0;
  static constexpr double kHazardMaxDistance = 10.0;

  Task(TaskKind kind, std::uint64_t seed);

  TaskKind kind() const { return kind_; }
  std::string name() const { return task_name(kind_); }
  int obs_dim() const;
  ActionSpec action_spec() const { return action_spec(kind_); }
  static ActionSpec action_spec(TaskKind kind);
  static int obs_dim(TaskKind kind);

  /// Random initial state.
  TaskState reset();
  /// Observation vector for a state. DodgeAim adds noise from the task generator.
  Eigen::VectorXd observe(const TaskState& state);
  /// Advances one step; throws on malformed actions.
  StepOutcome step(const TaskState& state, const Eigen::Ref<const Eigen::VectorXd>& action);
  /// Scripted expert action as a raw action row.
  Eigen::VectorXd expert_action(const TaskState& state) const;
  /// Uniformly random action row.
  Eigen::VectorXd random_action(std::mt19937_64& rng) const;

 private:
  TaskKind kind_;
  std::mt19937_64 rng_;
};

/// Demonstrations recorded from the scripted expert.
struct DemonstrationSet {
  std::string env;
  ActionSpec spec;
  std::uint64_t seed = 0;
  Eigen::MatrixXd observations;  // N x O
  Eigen::MatrixXd actions;       // N x D
  std::vector<std::size_t> episode_starts;
  std::vector<TaskState> states;  // underlying state per row; not serialized

  Eigen::Index size() const { return observations.rows(); }
};

DemonstrationSet generate_dataset(TaskKind kind, int n_episodes, std::uint64_t seed);

struct ScoreStats {
  std::vector<double> scores;
  double mean = 0.0;
  double stddev = 0.0;  // population
  double success_rate = 0.0;
};

/// Maps (observation, true state) to an action row.
using Agent = std::function<Eigen::VectorXd(const Eigen::VectorXd& obs, const TaskState& state)>;

/// Runs `n_episodes` seeded episodes; scores are reduced in episode order.
ScoreStats evaluate_agent(TaskKind kind, const Agent& agent, int n_episodes, std::uint64_t seed);

ScoreStats evaluate_expert(TaskKind kind, int n_episodes, std::uint64_t seed);
ScoreStats evaluate_random(TaskKind kind, int n_episodes, std::uint64_t seed);

/// Percentage improvement of `mean` over the random-agent mean.
double normalized_improvement(double mean, double random_mean);

}  // namespace scil
