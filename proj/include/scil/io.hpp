#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "scil/analysis.hpp"
#include "scil/network.hpp"
#include "scil/tasks.hpp"
#include "scil/trainer.hpp"

namespace scil {

// Action spec as an ordered list of
//   {"kind": "discrete", "cardinality": K} or
//   {"kind": "continuous", "lo": a, "hi": b, "bins": B}.
nlohmann::json action_spec_to_json(const ActionSpec& spec);
ActionSpec action_spec_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& config);
/// Starts from `base` and applies the keys present in `j`; unknown keys throw.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Experiment file: {"env", "action_spec", "output_dir", "train": {...}}.
/// Every key is optional except "env"; unknown keys throw.
struct ExperimentConfig {
  std::string env = "dodgeaim";
  std::optional<ActionSpec> action_spec;
  std::string output_dir = "runs/default";
  TrainConfig train;

  /// Spec from the file, or the environment's default.
  ActionSpec resolved_spec() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Dataset container (all integers little-endian):
//   [0, 8)    magic "SCILDSET"
//   [8, 12)   uint32 format version (1)
//   [12, 20)  uint64 header length H
//   [20, 20+H) JSON header: env, action_spec, obs_dim, action_dims, num_rows,
//              seed, episode_starts
//   then num_rows * obs_dim float64 observations, row-major,
//   then num_rows * action_dims float64 actions, row-major.
void write_dataset(const DemonstrationSet& set, const std::filesystem::path& path);
DemonstrationSet read_dataset(const std::filesystem::path& path);
/// Human-readable dump: header lines prefixed with '#', then one CSV row per sample.
void export_dataset_text(const DemonstrationSet& set, std::ostream& out);

// Checkpoint: JSON document {"format": "scil-checkpoint", "version": 1, "env",
// "layout", "action_spec", "layers": [{"name", "rows", "cols", "weight"
// (row-major), "bias"}]}. Doubles are written with round-trip precision.
void write_checkpoint(const NetworkParams<double>& params, const std::string& env, const std::filesystem::path& path);
struct Checkpoint {
  std::string env;
  NetworkParams<double> params;
};
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Loss fixture, whitespace separated; '#' starts a comment:
//   N E
//   N lines of E reals
//   N integer labels
//   temperature base_temperature
struct LossFixture {
  Eigen::MatrixXd embeddings;
  std::vector<ClassLabel> labels;
  LossParams params;
};
LossFixture parse_loss_fixture(std::istream& in);
LossFixture read_loss_fixture(const std::filesystem::path& path);

// history.csv columns: epoch, train_pred_loss, train_supcon_loss, train_total,
// val_<head>... (ce_<d> for discrete dims, mse_<d> for continuous dims),
// val_silhouette.
void write_history_csv(const TrainingHistory& history, const std::filesystem::path& path);
TrainingHistory read_history_csv(const std::filesystem::path& path);

// comparison.csv columns: epoch, then delta_<metric> (b - a) per metric.
void write_comparison_csv(const ComparisonReport& report, const std::filesystem::path& path);

// embedding_report.csv columns: index, label, pc1, pc2.
void write_embedding_report_csv(const EmbeddingReport& report, const std::filesystem::path& path);

/// key=value lines, one per entry, in insertion order.
using Summary = std::vector<std::pair<std::string, std::string>>;
void write_summary(const Summary& summary, const std::filesystem::path& path);
Summary embedding_summary(const EmbeddingReport& report);

std::string format_double(double v);

}  // namespace scil
