#include <cmath>
#include <random>

#include "doctest.h"
#include "scil/network.hpp"
#include "scil/tasks.hpp"

using namespace scil;

namespace {

const ActionSpec kMixedSpec({ContinuousDim{-1, 1, 5}, ContinuousDim{-1, 1, 5}, DiscreteDim{2}, DiscreteDim{3}});

struct Batch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  std::vector<ClassLabel> labels;
};

Batch random_batch(std::mt19937_64& rng, Eigen::Index n, int obs_dim, const ActionSpec& spec) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Batch b{Eigen::MatrixXd(n, obs_dim), Eigen::MatrixXd(n, static_cast<Eigen::Index>(spec.size())), {}};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < obs_dim; ++k) b.obs(i, k) = g(rng);
    for (std::size_t d = 0; d < spec.size(); ++d) {
      if (const auto* disc = std::get_if<DiscreteDim>(&spec[d])) {
        b.actions(i, static_cast<Eigen::Index>(d)) =
            std::uniform_int_distribution<int>(0, static_cast<int>(disc->cardinality) - 1)(rng);
      } else {
        b.actions(i, static_cast<Eigen::Index>(d)) = u(rng);
      }
    }
  }
  b.labels = batch_labels(b.actions, spec.with_bins(3));
  return b;
}

}  // namespace

TEST_CASE("forward with zero parameters gives zero outputs") {
  NetworkParams<double> p(NetworkLayout{5, {7, 6}, 4}, kMixedSpec);
  std::mt19937_64 rng(1);
  const auto b = random_batch(rng, 9, 5, kMixedSpec);
  const auto trace = forward<double>(b.obs, p);
  CHECK(trace.embedding().isZero(0.0));
  for (const auto& out : trace.head_outputs) CHECK(out.isZero(0.0));
  CHECK(trace.head_outputs[2].cols() == 2);
  CHECK(trace.head_outputs[3].cols() == 3);
  CHECK(trace.head_outputs[0].cols() == 1);
}

TEST_CASE("forward is row-wise deterministic") {
  NetworkParams<double> p(NetworkLayout{3, {8}, 5}, kMixedSpec);
  p.initialize(4);
  Eigen::MatrixXd obs(3, 3);
  obs << 0.1, -0.2, 0.3, 0.1, -0.2, 0.3, 1, 2, 3;
  const auto t = forward<double>(obs, p);
  CHECK(t.embedding().row(0) == t.embedding().row(1));
  for (const auto& out : t.head_outputs) CHECK(out.row(0) == out.row(1));
}

TEST_CASE("single identity layer reproduces its input") {
  NetworkParams<double> p(NetworkLayout{3, {}, 3}, kMixedSpec);
  p.extractor[0].weight = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd obs(2, 3);
  obs << 1, -2, 3, -0.5, 0.25, 0;
  CHECK(forward<double>(obs, p).embedding() == obs);
}

TEST_CASE("forward errors") {
  NetworkParams<double> p(NetworkLayout{3, {4}, 2}, kMixedSpec);
  CHECK_THROWS_AS(forward<double>(Eigen::MatrixXd::Zero(2, 4), p), std::invalid_argument);
  p.extractor[1].weight(0, 0) = std::numeric_limits<double>::infinity();
  p.extractor[0].bias.setOnes();
  p.extractor[0].weight.setOnes();
  try {
    (void)forward<double>(Eigen::MatrixXd::Ones(2, 3), p);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("initialization is seeded and bounded by fan-in") {
  NetworkParams<double> a(NetworkLayout{4, {16}, 8}, kMixedSpec), b = a, c = a;
  a.initialize(7);
  b.initialize(7);
  c.initialize(8);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != c.flatten());
  CHECK(a.extractor[0].weight.cwiseAbs().maxCoeff() <= 0.5);
  CHECK(a.extractor[1].weight.cwiseAbs().maxCoeff() <= 0.25);

  NetworkParams<double> d = a.zeros_like();
  d.assign(a.flatten());
  CHECK(d.flatten() == a.flatten());
}

TEST_CASE("predictive_loss closed forms") {
  const ActionSpec two({DiscreteDim{2}});
  ForwardTrace<double> trace;
  trace.activations.push_back(Eigen::MatrixXd::Zero(1, 1));
  Eigen::MatrixXd logits(1, 2);
  Eigen::MatrixXd label(1, 1);
  label << 0;

  logits << 10, -10;
  trace.head_outputs = {logits};
  CHECK(predictive_loss(trace, label, two).total == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(predictive_loss(trace, label, two).total == doctest::Approx(2.0611536942919273e-09).epsilon(1e-9));

  logits << 10, 0;
  trace.head_outputs = {logits};
  CHECK(predictive_loss(trace, label, two).total == doctest::Approx(4.5398899216870535e-05).epsilon(1e-9));

  const ActionSpec five({DiscreteDim{5}});
  trace.head_outputs = {Eigen::MatrixXd::Constant(1, 5, 0.3)};
  CHECK(predictive_loss(trace, label, five).total == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  const ActionSpec cont({ContinuousDim{-1, 1, 5}});
  Eigen::MatrixXd target(1, 1);
  target << 0.42;
  trace.head_outputs = {target};
  CHECK(predictive_loss(trace, target, cont).total == 0.0);

  label << 5;
  trace.head_outputs = {Eigen::MatrixXd::Zero(1, 5)};
  CHECK_THROWS_AS(predictive_loss(trace, label, five), std::invalid_argument);
}

TEST_CASE("combined_backward structure") {
  std::mt19937_64 rng(31);
  NetworkParams<double> p(NetworkLayout{6, {12, 10}, 8}, kMixedSpec);
  p.initialize(3);
  const auto b = random_batch(rng, 16, 6, kMixedSpec);
  const auto trace = forward<double>(b.obs, p);
  const LossParams lp{0.5, 0.5};

  const auto bc = combined_backward(trace, p, b.actions, b.labels, 0.0, lp);
  const auto one = combined_backward(trace, p, b.actions, b.labels, 1.0, lp);
  const auto three = combined_backward(trace, p, b.actions, b.labels, 3.0, lp);

  SUBCASE("report is affine in lambda") {
    CHECK(bc.report.total == bc.report.pred_loss);
    CHECK(three.report.total == doctest::Approx(bc.report.pred_loss + 3.0 * bc.report.supcon_loss).epsilon(1e-14));
    CHECK(one.report.supcon_loss == bc.report.supcon_loss);
  }
  SUBCASE("heads never see the contrastive term") {
    for (std::size_t h = 0; h < p.heads.size(); ++h) {
      CHECK(one.grads.heads[h].weight == bc.grads.heads[h].weight);
      CHECK(one.grads.heads[h].bias == bc.grads.heads[h].bias);
    }
  }
  SUBCASE("gradients are linear in lambda") {
    const Eigen::VectorXd g0 = bc.grads.flatten();
    const Eigen::VectorXd g1 = one.grads.flatten();
    const Eigen::VectorXd g3 = three.grads.flatten();
    CHECK((g3 - (g0 + 3.0 * (g1 - g0))).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("lambda = 0 equals predictive-only backprop") {
    // Backprop of the predictive loss written out independently.
    const auto pred = predictive_loss(trace, b.actions, p.spec);
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(16, 8);
    for (std::size_t h = 0; h < p.heads.size(); ++h) up += pred.head_grads[h] * p.heads[h].weight.transpose();
    const Eigen::MatrixXd dz2 = up;
    const Eigen::MatrixXd dz1 =
        ((dz2 * p.extractor[2].weight.transpose()).array() * (trace.pre_activations[1].array() > 0).cast<double>())
            .matrix();
    const Eigen::MatrixXd dz0 =
        ((dz1 * p.extractor[1].weight.transpose()).array() * (trace.pre_activations[0].array() > 0).cast<double>())
            .matrix();
    CHECK((bc.grads.extractor[2].weight - trace.activations[2].transpose() * dz2).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((bc.grads.extractor[1].weight - trace.activations[1].transpose() * dz1).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((bc.grads.extractor[0].weight - b.obs.transpose() * dz0).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK_THROWS_AS(combined_backward(trace, p, b.actions, b.labels, -1.0, lp), std::invalid_argument);
}

TEST_CASE("grad_check: linear net with MSE only") {
  const ActionSpec cont({ContinuousDim{-1, 1, 5}, ContinuousDim{-1, 1, 5}});
  NetworkParams<double> p(NetworkLayout{4, {}, 3}, cont);
  p.initialize(5);
  std::mt19937_64 rng(6);
  const auto b = random_batch(rng, 10, 4, cont);
  GradCheckBatch batch{b.obs, b.actions, b.labels, 0.0, {}};
  const auto report = grad_check(p, batch, 1e-8);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-8);
  CHECK(report.num_checked == p.num_parameters());
}

TEST_CASE("grad_check: full combined loss at default sizes") {
  for (TaskKind kind : {TaskKind::DodgeAim, TaskKind::GridChase}) {
    const ActionSpec spec = Task::action_spec(kind);
    NetworkParams<double> p(NetworkLayout{Task::obs_dim(kind), {64, 64}, 32}, spec);
    p.initialize(11);
    std::mt19937_64 rng(12);
    auto b = random_batch(rng, 16, Task::obs_dim(kind), spec);
    GradCheckBatch batch{b.obs, b.actions, b.labels, 1.0, {0.07, 0.07}};
    const auto report = grad_check(p, batch, 1e-4);
    INFO(task_name(kind) << " max rel error " << report.max_rel_error);
    CHECK(report.passed);
    CHECK(report.mean_rel_error <= report.max_rel_error);
    CHECK(report.num_kinks * 100 < report.num_checked);
  }
}

TEST_CASE("grad_check excludes probes that cross a ReLU kink") {
  const ActionSpec cont({ContinuousDim{-1, 1, 5}});
  NetworkParams<double> p(NetworkLayout{1, {1}, 1}, cont);
  p.extractor[0].weight(0, 0) = 1.0;
  p.extractor[1].weight(0, 0) = 1.0;
  p.extractor[1].bias(0) = 1.0;
  p.heads[0].weight(0, 0) = 1.0;
  Eigen::MatrixXd obs(2, 1), actions(2, 1);
  obs << 0.0, 1.0;  // first sample sits exactly on the kink
  actions << 0.5, -0.5;
  const std::vector<ClassLabel> labels{0, 1};
  const auto report = grad_check(p, GradCheckBatch{obs, actions, labels, 0.0, {}}, 1e-6);
  CHECK(report.num_kinks == 1);  // the hidden bias; the weight multiplies a zero input
  CHECK(report.num_checked == p.num_parameters() - 1);
  CHECK(report.passed);
}

TEST_CASE("grad_check with tolerance 0 always fails") {
  NetworkParams<double> p(NetworkLayout{3, {4}, 3}, kMixedSpec);
  p.initialize(1);
  std::mt19937_64 rng(2);
  const auto b = random_batch(rng, 6, 3, kMixedSpec);
  CHECK_FALSE(grad_check(p, GradCheckBatch{b.obs, b.actions, b.labels, 1.0, {0.5, 0.5}}, 0.0).passed);
}
