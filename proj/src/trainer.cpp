#include "scil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "scil/analysis.hpp"

namespace scil {

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "adam";
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd, momentum or adam)");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be >= 0");
  loss_params().validate();
  if (bins < 2) throw std::invalid_argument("bins must be >= 2");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in (0, 1)");
  }
  if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden layer sizes must be >= 1");
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, const TrainConfig& config, Eigen::Index size)
    : kind_(kind),
      lr_(learning_rate),
      momentum_(config.momentum),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_epsilon),
      first_(Eigen::VectorXd::Zero(size)),
      second_(Eigen::VectorXd::Zero(size)) {}

void Optimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  switch (kind_) {
    case OptimizerKind::Sgd:
      params -= lr_ * grad;
      break;
    case OptimizerKind::Momentum:
      first_ = momentum_ * first_ + grad;
      params -= lr_ * first_;
      break;
    case OptimizerKind::Adam: {
      ++t_;
      first_ = beta1_ * first_ + (1.0 - beta1_) * grad;
      second_ = beta2_ * second_ + (1.0 - beta2_) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
      params.array() -= lr_ * (first_.array() / c1) / ((second_.array() / c2).sqrt() + eps_);
      break;
    }
  }
}

DataSplit split_dataset(Eigen::Index n, double validation_fraction, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * validation_fraction));
  DataSplit split;
  split.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return split;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  return m(rows, Eigen::all);
}

ValidationMetrics validate_network(const NetworkParams<double>& params, const Eigen::MatrixXd& obs,
                                   const Eigen::MatrixXd& actions, const ActionSpec& label_spec) {
  ValidationMetrics out;
  const auto trace = forward<double>(obs, params);
  out.head_errors = predictive_loss(trace, actions, params.spec).per_head;
  const auto labels = batch_labels(actions, label_spec);
  const std::set<ClassLabel> distinct(labels.begin(), labels.end());
  if (distinct.size() >= 2 && obs.rows() >= 3) out.silhouette = silhouette(trace.embedding(), labels);
  return out;
}

TrainResult train(const TrainConfig& config, const DemonstrationSet& dataset, const EpochCallback& on_epoch) {
  config.validate();
  const Eigen::Index n = dataset.size();
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  if (dataset.actions.rows() != n) throw std::invalid_argument("train: observation/action row counts differ");
  if (static_cast<std::size_t>(dataset.actions.cols()) != dataset.spec.size()) {
    throw std::invalid_argument("train: action columns do not match the dataset spec");
  }

  TrainResult result;
  result.split = split_dataset(n, config.validation_fraction, config.seed);
  const auto train_rows = static_cast<Eigen::Index>(result.split.train.size());
  if (config.batch_size > train_rows) {
    throw std::invalid_argument("train: batch_size " + std::to_string(config.batch_size) + " exceeds the " +
                                std::to_string(train_rows) + " training rows");
  }

  const ActionSpec label_spec = dataset.spec.with_bins(config.bins);
  const LossParams loss_params = config.loss_params();
  NetworkLayout layout{static_cast<int>(dataset.observations.cols()), config.hidden, config.embedding_dim};
  result.params = NetworkParams<double>(layout, dataset.spec);
  result.params.initialize(config.seed);

  const Eigen::MatrixXd train_obs = gather_rows(dataset.observations, result.split.train);
  const Eigen::MatrixXd train_actions = gather_rows(dataset.actions, result.split.train);
  const std::vector<ClassLabel> train_labels = batch_labels(train_actions, label_spec);
  const Eigen::MatrixXd val_obs = gather_rows(dataset.observations, result.split.validation);
  const Eigen::MatrixXd val_actions = gather_rows(dataset.actions, result.split.validation);

  result.history.run_label = config.run_label();
  for (std::size_t d = 0; d < dataset.spec.size(); ++d) {
    result.history.head_names.push_back((is_discrete(dataset.spec[d]) ? "ce_" : "mse_") + std::to_string(d));
  }

  Eigen::VectorXd theta = result.params.flatten();
  Optimizer optimizer(config.optimizer, config.learning_rate, config, theta.size());
  std::mt19937_64 shuffle_rng(config.seed + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_rows));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index batches = train_rows / config.batch_size;  // trailing partial batch dropped

  Eigen::MatrixXd batch_obs(config.batch_size, train_obs.cols());
  Eigen::MatrixXd batch_actions(config.batch_size, train_actions.cols());
  std::vector<ClassLabel> batch_label_buf(static_cast<std::size_t>(config.batch_size));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord record;
    record.epoch = epoch;
    for (Eigen::Index b = 0; b < batches; ++b) {
      for (Eigen::Index r = 0; r < config.batch_size; ++r) {
        const Eigen::Index src = order[static_cast<std::size_t>(b * config.batch_size + r)];
        batch_obs.row(r) = train_obs.row(src);
        batch_actions.row(r) = train_actions.row(src);
        batch_label_buf[static_cast<std::size_t>(r)] = train_labels[static_cast<std::size_t>(src)];
      }
      const auto trace = forward<double>(batch_obs, result.params);
      const auto step =
          combined_backward(trace, result.params, batch_actions, batch_label_buf, config.lambda, loss_params);
      record.train_pred_loss += step.report.pred_loss;
      record.train_supcon_loss += step.report.supcon_loss;
      record.train_total += step.report.total;
      optimizer.step(theta, step.grads.flatten());
      result.params.assign(theta);
    }
    const double inv = 1.0 / static_cast<double>(batches);
    record.train_pred_loss *= inv;
    record.train_supcon_loss *= inv;
    record.train_total *= inv;

    const auto metrics = validate_network(result.params, val_obs, val_actions, label_spec);
    record.val_head_errors = metrics.head_errors;
    record.val_silhouette = metrics.silhouette;
    result.history.epochs.push_back(std::move(record));
    if (on_epoch) on_epoch(result.history.epochs.back(), result.params);
  }
  return result;
}

Eigen::VectorXd greedy_action(const NetworkParams<double>& params, const Eigen::VectorXd& obs) {
  const auto trace = forward<double>(obs.transpose(), params);
  Eigen::VectorXd action(static_cast<Eigen::Index>(params.spec.size()));
  for (std::size_t d = 0; d < params.spec.size(); ++d) {
    const auto& out = trace.head_outputs[d];
    if (is_discrete(params.spec[d])) {
      Eigen::Index best = 0;
      out.row(0).maxCoeff(&best);
      action(static_cast<Eigen::Index>(d)) = static_cast<double>(best);
    } else {
      const auto& cont = std::get<ContinuousDim>(params.spec[d]);
      action(static_cast<Eigen::Index>(d)) = std::clamp(out(0, 0), cont.lo, cont.hi);
    }
  }
  return action;
}

ScoreStats evaluate_policy(const NetworkParams<double>& params, TaskKind kind, int n_episodes, std::uint64_t seed) {
  const ActionSpec expected = Task::action_spec(kind);
  bool matches = params.layout.obs_dim == Task::obs_dim(kind) && params.spec.size() == expected.size();
  for (std::size_t d = 0; matches && d < expected.size(); ++d) {
    matches = is_discrete(params.spec[d]) == is_discrete(expected[d]) && head_width(params.spec[d]) == head_width(expected[d]);
  }
  if (!matches) throw std::invalid_argument("evaluate_policy: network does not match the " + task_name(kind) + " layout");
  return evaluate_agent(
      kind, [&](const Eigen::VectorXd& obs, const TaskState&) { return greedy_action(params, obs); }, n_episodes, seed);
}

namespace {

std::vector<double> metric_row(const EpochRecord& r) {
  std::vector<double> row{r.train_pred_loss, r.train_supcon_loss, r.train_total};
  row.insert(row.end(), r.val_head_errors.begin(), r.val_head_errors.end());
  row.push_back(r.val_silhouette);
  return row;
}

double trapezoid(const std::vector<double>& y) {
  double area = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) area += 0.5 * (y[i - 1] + y[i]);
  return area;
}

}  // namespace

ComparisonReport compare_runs(const TrainingHistory& a, const TrainingHistory& b) {
  if (a.epochs.size() != b.epochs.size()) {
    throw std::invalid_argument("compare_runs: histories cover " + std::to_string(a.epochs.size()) + " and " +
                                std::to_string(b.epochs.size()) + " epochs");
  }
  if (a.head_names != b.head_names) throw std::invalid_argument("compare_runs: histories track different heads");
  if (a.epochs.empty()) throw std::invalid_argument("compare_runs: empty histories");

  ComparisonReport report;
  report.metrics = {"train_pred_loss", "train_supcon_loss", "train_total"};
  for (const auto& h : a.head_names) report.metrics.push_back("val_" + h);
  report.metrics.push_back("val_silhouette");

  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    const auto ra = metric_row(a.epochs[e]);
    const auto rb = metric_row(b.epochs[e]);
    std::vector<double> delta(ra.size());
    for (std::size_t k = 0; k < ra.size(); ++k) delta[k] = rb[k] - ra[k];
    report.deltas.push_back(std::move(delta));
  }
  for (std::size_t h = 0; h < a.head_names.size(); ++h) {
    std::vector<double> ya, yb;
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
      ya.push_back(a.epochs[e].val_head_errors[h]);
      yb.push_back(b.epochs[e].val_head_errors[h]);
    }
    report.auc_a.push_back(trapezoid(ya));
    report.auc_b.push_back(trapezoid(yb));
  }
  report.final_silhouette_delta = b.epochs.back().val_silhouette - a.epochs.back().val_silhouette;
  return report;
}

}  // namespace scil
