#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scil/network.hpp"
#include "scil/tasks.hpp"

namespace scil {

enum class OptimizerKind { Sgd, Momentum, Adam };

std::string optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(const std::string& name);

struct TrainConfig {
  double lambda = 1.0;
  double temperature = 0.07;
  double base_temperature = 0.07;
  std::uint64_t bins = 5;
  int batch_size = 256;
  int epochs = 40;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  std::vector<int> hidden{64, 64};
  int embedding_dim = 32;

  void validate() const;
  LossParams loss_params() const { return {temperature, base_temperature}; }
  /// "BL" when the contrastive weight is zero, "SCIL" otherwise.
  std::string run_label() const { return lambda == 0.0 ? "BL" : "SCIL"; }
};

/// First-order optimizer over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const TrainConfig& config, Eigen::Index size);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  OptimizerKind kind_;
  double lr_, momentum_, beta1_, beta2_, eps_;
  Eigen::VectorXd first_, second_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_pred_loss = 0.0;
  double train_supcon_loss = 0.0;
  double train_total = 0.0;
  std::vector<double> val_head_errors;  // cross-entropy or MSE per action dim
  double val_silhouette = 0.0;
};

struct TrainingHistory {
  std::string run_label;
  std::vector<std::string> head_names;  // e.g. "ce_0", "mse_1"
  std::vector<EpochRecord> epochs;
};

struct DataSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
};

/// Seeded row-level split; the first round(N * fraction) rows of a random
/// permutation go to validation.
DataSplit split_dataset(Eigen::Index n, double validation_fraction, std::uint64_t seed);

/// Rows of `m` selected by `rows`.
Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows);

struct TrainResult {
  NetworkParams<double> params;
  TrainingHistory history;
  DataSplit split;
};

/// Predictive validation errors (per head) and the silhouette of the
/// validation embeddings by action label. Never includes the contrastive term.
struct ValidationMetrics {
  std::vector<double> head_errors;
  double silhouette = 0.0;
};

ValidationMetrics validate_network(const NetworkParams<double>& params, const Eigen::MatrixXd& obs,
                                   const Eigen::MatrixXd& actions, const ActionSpec& label_spec);

/// Called after each completed epoch with the current parameters.
using EpochCallback = std::function<void(const EpochRecord&, const NetworkParams<double>&)>;

TrainResult train(const TrainConfig& config, const DemonstrationSet& dataset, const EpochCallback& on_epoch = {});

/// Greedy action row: argmax for discrete heads, clamped regression output for
/// continuous ones.
Eigen::VectorXd greedy_action(const NetworkParams<double>& params, const Eigen::VectorXd& obs);

ScoreStats evaluate_policy(const NetworkParams<double>& params, TaskKind kind, int n_episodes, std::uint64_t seed);

struct ComparisonReport {
  std::vector<std::string> metrics;            // column names compared
  std::vector<std::vector<double>> deltas;     // [epoch][metric], b - a
  std::vector<double> auc_a, auc_b;            // trapezoidal area per validation-error metric
  double final_silhouette_delta = 0.0;         // b - a at the final epoch
};

/// Per-epoch differences (b - a) of every recorded metric.
ComparisonReport compare_runs(const TrainingHistory& a, const TrainingHistory& b);

}  // namespace scil
