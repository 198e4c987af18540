#include <cmath>
#include <numbers>

#include "doctest.h"
#include "scil/tasks.hpp"

using namespace scil;

namespace {

Eigen::VectorXd row(std::initializer_list<double> v) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

GridChaseState grid(int ax, int ay, int tx, int ty) { return GridChaseState{ax, ay, tx, ty, 0}; }

}  // namespace

TEST_CASE("gridchase_expert examples") {
  CHECK(gridchase_expert(grid(0, 0, 3, 0)) == GridAction::Right);
  CHECK(gridchase_expert(grid(4, 4, 4, 4)) == GridAction::Stay);
  CHECK(gridchase_expert(grid(2, 5, 2, 1)) == GridAction::Up);
  CHECK(gridchase_expert(grid(2, 1, 2, 5)) == GridAction::Down);
  CHECK(gridchase_expert(grid(5, 0, 1, 2)) == GridAction::Left);
  // ties go horizontal
  CHECK(gridchase_expert(grid(0, 0, 3, 3)) == GridAction::Right);
  CHECK(gridchase_expert(grid(3, 3, 0, 0)) == GridAction::Left);
}

TEST_CASE("gridchase expert reaches every target in |dx| + |dy| steps") {
  Task task(TaskKind::GridChase, 0);
  for (int a = 0; a < 64; ++a) {
    for (int t = 0; t < 64; ++t) {
      if (a == t) continue;
      GridChaseState s = grid(a % 8, a / 8, t % 8, t / 8);
      const int expected = std::abs(s.target_x - s.agent_x) + std::abs(s.target_y - s.agent_y);
      int steps = 0;
      StepOutcome out;
      do {
        out = task.step(s, task.expert_action(s));
        s = std::get<GridChaseState>(out.next);
        ++steps;
      } while (!out.done);
      REQUIRE(out.success);
      CHECK(steps == expected);
      CHECK(out.score_delta == 1.0);
    }
  }
}

TEST_CASE("gridchase step") {
  Task task(TaskKind::GridChase, 1);
  auto next = [&](GridChaseState s, GridAction a) {
    return std::get<GridChaseState>(task.step(s, row({static_cast<double>(a)})).next);
  };
  const auto moved = next(grid(0, 0, 5, 5), GridAction::Right);
  CHECK(moved.agent_x == 1);
  CHECK(moved.agent_y == 0);
  CHECK(moved.steps_elapsed == 1);
  CHECK(next(grid(7, 0, 5, 5), GridAction::Right).agent_x == 7);
  CHECK(next(grid(3, 0, 5, 5), GridAction::Up).agent_y == 0);
  CHECK(next(grid(3, 7, 5, 5), GridAction::Down).agent_y == 7);
  CHECK(next(grid(0, 3, 5, 5), GridAction::Left).agent_x == 0);

  GridChaseState late = grid(0, 0, 7, 7);
  late.steps_elapsed = Task::kGridHorizon - 1;
  const auto out = task.step(late, row({4}));
  CHECK(out.done);
  CHECK_FALSE(out.success);
  CHECK(out.score_delta == 0.0);

  CHECK_THROWS_AS(task.step(grid(0, 0, 1, 1), row({5})), std::invalid_argument);
  CHECK_THROWS_AS(task.step(grid(0, 0, 1, 1), row({0.5})), std::invalid_argument);
  CHECK_THROWS_AS(task.step(grid(0, 0, 1, 1), row({0, 0})), std::invalid_argument);
}

TEST_CASE("dodgeaim_expert examples") {
  const auto a = dodgeaim_expert(DodgeAimState{0.0, 0.0, false, 0, 0.0});
  CHECK(a.stick_x == 1.0);
  CHECK(a.stick_y == 0.0);
  CHECK(a.dodge == 0);
  CHECK(a.fire == 1);

  const auto b = dodgeaim_expert(DodgeAimState{std::numbers::pi / 2, 1.0, true, 0, 0.0});
  CHECK(b.stick_x == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(b.stick_y == 1.0);
  CHECK(b.dodge == 1);
  CHECK(b.fire == 0);

  CHECK(dodgeaim_expert(DodgeAimState{1.0, 2.0, true, 0, 0.0}).dodge == 0);
  CHECK(dodgeaim_expert(DodgeAimState{1.0, 1.999, true, 0, 0.0}).dodge == 1);
  CHECK(dodgeaim_expert(DodgeAimState{1.0, 1.0, false, 0, 0.0}).dodge == 0);
}

TEST_CASE("dodgeaim step") {
  Task task(TaskKind::DodgeAim, 2);

  SUBCASE("dodging a close hazard clears it") {
    const DodgeAimState s{0.0, 1.0, true, 10, 3.0};
    const auto out = task.step(s, row({0, 0, 1, 0}));
    const auto& n = std::get<DodgeAimState>(out.next);
    CHECK_FALSE(out.done);
    CHECK_FALSE(n.hazard_active);
    CHECK(n.score == 3.0);
    CHECK(n.steps_elapsed == 11);
  }
  SUBCASE("an approaching hazard moves by the fixed speed") {
    const DodgeAimState s{0.0, 5.0, true, 0, 0.0};
    const auto out = task.step(s, row({0, 0, 0, 0}));
    CHECK(std::get<DodgeAimState>(out.next).hazard_distance == 4.5);
    // dodging outside the window does nothing
    CHECK(std::get<DodgeAimState>(task.step(s, row({0, 0, 1, 0})).next).hazard_active);
  }
  SUBCASE("a hit ends the episode with score zero") {
    const DodgeAimState s{0.0, 0.5, true, 30, 4.0};
    const auto out = task.step(s, row({1, 0, 0, 1}));
    CHECK(out.done);
    CHECK_FALSE(out.success);
    CHECK(out.score_delta == -4.0);
    CHECK(std::get<DodgeAimState>(out.next).score == 0.0);
  }
  SUBCASE("aimed fire scores and resamples the target") {
    const DodgeAimState s{0.3, 0.0, false, 0, 0.0};
    const auto hit = task.step(s, row({std::cos(0.45), std::sin(0.45), 0, 1}));
    CHECK(hit.score_delta == 1.0);
    CHECK(std::get<DodgeAimState>(hit.next).target_angle != 0.3);
    CHECK(task.step(s, row({std::cos(0.55), std::sin(0.55), 0, 1})).score_delta == 0.0);
    CHECK(task.step(s, row({std::cos(0.3), std::sin(0.3), 0, 0})).score_delta == 0.0);
    CHECK(task.step(s, row({0, 0, 0, 1})).score_delta == 0.0);
    // wrap-around near zero
    const DodgeAimState w{2 * std::numbers::pi - 0.05, 0.0, false, 0, 0.0};
    CHECK(task.step(w, row({std::cos(0.05), std::sin(0.05), 0, 1})).score_delta == 1.0);
  }
  SUBCASE("horizon") {
    const DodgeAimState s{0.0, 0.0, false, Task::kDodgeHorizon - 1, 2.0};
    const auto out = task.step(s, row({0, 0, 0, 0}));
    CHECK(out.done);
    CHECK(out.success);
  }
  SUBCASE("malformed actions") {
    const DodgeAimState s{};
    CHECK_THROWS_AS(task.step(s, row({0, 0, 0})), std::invalid_argument);
    CHECK_THROWS_AS(task.step(s, row({1.5, 0, 0, 0})), std::invalid_argument);
    CHECK_THROWS_AS(task.step(s, row({0, 0, 2, 0})), std::invalid_argument);
    CHECK_THROWS_AS(task.step(s, row({0, 0, 0, 0.5})), std::invalid_argument);
    CHECK_THROWS_AS(task.step(s, row({std::nan(""), 0, 0, 0})), std::invalid_argument);
  }
}

TEST_CASE("observations") {
  Task g(TaskKind::GridChase, 0);
  const Eigen::VectorXd o = g.observe(grid(0, 0, 7, 7));
  REQUIRE(o.size() == 20);
  CHECK(o.head(4) == row({0, 0, 1, 1}));
  CHECK(o(4) == 1.0);
  CHECK(o(19) == -1.0);
  CHECK(o.tail(16).cwiseAbs().sum() == 2.0);
  // agent and target in the same coarse cell cancel
  CHECK(g.observe(grid(0, 0, 1, 1)).tail(16).isZero(0.0));

  Task d(TaskKind::DodgeAim, 0);
  const DodgeAimState s{std::numbers::pi, 3.0, true, 0, 0.0};
  const Eigen::VectorXd a = d.observe(s);
  const Eigen::VectorXd b = d.observe(s);
  CHECK(a.size() == 4);
  CHECK(a != b);  // noise
  CHECK(a(2) == 0.3);
  CHECK(a(3) == 1.0);
  CHECK(std::abs(a(0) + 1.0) < 0.5);
}

TEST_CASE("generate_dataset") {
  SUBCASE("deterministic for a fixed seed") {
    for (TaskKind kind : {TaskKind::GridChase, TaskKind::DodgeAim}) {
      const auto a = generate_dataset(kind, 3, 42);
      const auto b = generate_dataset(kind, 3, 42);
      const auto c = generate_dataset(kind, 3, 43);
      CHECK(a.observations == b.observations);
      CHECK(a.actions == b.actions);
      CHECK(a.episode_starts == b.episode_starts);
      CHECK(a.observations != c.observations);
    }
  }
  SUBCASE("episode boundaries") {
    const auto one = generate_dataset(TaskKind::GridChase, 1, 5);
    CHECK(one.episode_starts == std::vector<std::size_t>{0});
    const auto many = generate_dataset(TaskKind::DodgeAim, 20, 5);
    CHECK(many.episode_starts.size() == 20);
    CHECK(many.episode_starts.front() == 0);
    for (std::size_t e = 1; e < many.episode_starts.size(); ++e) {
      CHECK(many.episode_starts[e] > many.episode_starts[e - 1]);
      CHECK(std::get<DodgeAimState>(many.states[many.episode_starts[e]]).steps_elapsed == 0);
    }
    CHECK(many.size() <= 20 * Task::kDodgeHorizon);
    CHECK_THROWS_AS(generate_dataset(TaskKind::GridChase, 0, 1), std::invalid_argument);
  }
  SUBCASE("every action is the expert's action for the stored state") {
    for (TaskKind kind : {TaskKind::GridChase, TaskKind::DodgeAim}) {
      const auto set = generate_dataset(kind, 10, 9);
      const Task reference(kind, 0);
      REQUIRE(set.states.size() == static_cast<std::size_t>(set.size()));
      for (Eigen::Index i = 0; i < set.size(); ++i) {
        CHECK(reference.expert_action(set.states[static_cast<std::size_t>(i)]) == set.actions.row(i).transpose());
      }
      CHECK(set.observations.cols() == Task::obs_dim(kind));
      CHECK(set.spec == Task::action_spec(kind));
    }
  }
  SUBCASE("labels fit the declared label space") {
    const auto set = generate_dataset(TaskKind::DodgeAim, 5, 1);
    for (auto l : batch_labels(set.actions, set.spec)) CHECK(l < 100);
  }
}

TEST_CASE("evaluation") {
  const auto expert = evaluate_expert(TaskKind::GridChase, 50, 3);
  CHECK(expert.success_rate == 1.0);
  CHECK(expert.mean == 1.0);
  CHECK(expert.stddev == 0.0);

  const auto r1 = evaluate_random(TaskKind::DodgeAim, 20, 4);
  const auto r2 = evaluate_random(TaskKind::DodgeAim, 20, 4);
  CHECK(r1.scores == r2.scores);
  const auto ex = evaluate_expert(TaskKind::DodgeAim, 20, 4);
  CHECK(ex.mean > r1.mean);
  CHECK(ex.success_rate == 1.0);

  const auto single = evaluate_expert(TaskKind::DodgeAim, 1, 7);
  CHECK(single.scores.size() == 1);
  CHECK(single.stddev == 0.0);
  CHECK_THROWS_AS(evaluate_random(TaskKind::GridChase, 0, 1), std::invalid_argument);

  CHECK(normalized_improvement(3.0, 3.0) == 0.0);
  CHECK(normalized_improvement(3.0, 2.0) == 50.0);
  CHECK(normalized_improvement(1.0, -2.0) == 150.0);
  CHECK(normalized_improvement(0.5, 0.0) == 50.0);
}

TEST_CASE("task names") {
  CHECK(task_from_name("gridchase") == TaskKind::GridChase);
  CHECK(task_from_name(task_name(TaskKind::DodgeAim)) == TaskKind::DodgeAim);
  CHECK_THROWS_AS(task_from_name("pong"), std::invalid_argument);
}
