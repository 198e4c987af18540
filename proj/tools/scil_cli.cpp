// Command-line driver: dataset generation, training, evaluation, loss
// cross-checks and embedding analysis.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "scil/analysis.hpp"
#include "scil/io.hpp"
#include "scil/supcon.hpp"
#include "scil/supcon_reference.hpp"
#include "scil/tasks.hpp"
#include "scil/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kOracleTolerance = 1e-9;
constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-5;

scil::ExperimentConfig load_or_default(const std::string& path, const std::string& env_override) {
  scil::ExperimentConfig config;
  if (!path.empty()) config = scil::load_experiment_config(path);
  if (!env_override.empty()) {
    scil::task_from_name(env_override);
    if (config.action_spec && env_override != config.env) {
      throw std::invalid_argument("--env conflicts with the action_spec in the config file");
    }
    config.env = env_override;
  }
  return config;
}

std::map<scil::ClassLabel, std::size_t> histogram_of(const std::vector<scil::ClassLabel>& labels) {
  std::map<scil::ClassLabel, std::size_t> out;
  for (auto l : labels) ++out[l];
  return out;
}

void print_histogram(const std::map<scil::ClassLabel, std::size_t>& histogram, const scil::ActionSpec& spec) {
  std::cout << "classes: " << histogram.size() << "\n";
  for (const auto& [label, count] : histogram) {
    const auto digits = scil::decode_label(label, spec.bases()).v;
    std::cout << "  label " << label << " (";
    for (std::size_t d = 0; d < digits.size(); ++d) std::cout << (d ? "," : "") << digits[d];
    std::cout << "): " << count << "\n";
  }
}

json stats_to_json(const scil::ScoreStats& s) {
  return {{"episodes", s.scores.size()},
          {"mean", s.mean},
          {"std", s.stddev},
          {"success_rate", s.success_rate},
          {"scores", s.scores}};
}

// Max of |analytic - numeric| / max(1, |analytic|) over all entries.
double supcon_fd_error(const Eigen::MatrixXd& e, const std::vector<scil::ClassLabel>& labels,
                       const scil::LossParams& params, const Eigen::MatrixXd& analytic) {
  double worst = 0.0;
  Eigen::MatrixXd probe = e;
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index k = 0; k < e.cols(); ++k) {
      probe(i, k) = e(i, k) + kFiniteDifferenceStep;
      const double plus = scil::supcon_forward(probe, labels, params);
      probe(i, k) = e(i, k) - kFiniteDifferenceStep;
      const double minus = scil::supcon_forward(probe, labels, params);
      probe(i, k) = e(i, k);
      const double numeric = (plus - minus) / (2.0 * kFiniteDifferenceStep);
      worst = std::max(worst, std::abs(analytic(i, k) - numeric) / std::max(1.0, std::abs(analytic(i, k))));
    }
  }
  return worst;
}

// gen ------------------------------------------------------------------------

struct GenOptions {
  std::string config, env, out, text;
  int episodes = 20;
  std::uint64_t seed = 0;
};

int run_gen(const GenOptions& o) {
  const auto config = load_or_default(o.config, o.env);
  const auto kind = scil::task_from_name(config.env);
  auto set = scil::generate_dataset(kind, o.episodes, o.seed);
  set.spec = config.resolved_spec();
  scil::write_dataset(set, o.out);
  if (!o.text.empty()) {
    std::ofstream text(o.text);
    if (!text) throw std::runtime_error("cannot open '" + o.text + "' for writing");
    scil::export_dataset_text(set, text);
  }
  std::cout << "env: " << set.env << "\nrows: " << set.size() << "\nepisodes: " << set.episode_starts.size() << "\n";
  print_histogram(histogram_of(scil::batch_labels(set.actions, set.spec)), set.spec);
  return 0;
}

// train ----------------------------------------------------------------------

struct TrainOptions {
  std::string config, dataset, out;
  std::optional<double> lambda, temperature, base_temperature, learning_rate;
  std::optional<std::uint64_t> bins, seed;
  std::optional<int> epochs, batch_size;
  int save_every = 0;
};

int run_train(const TrainOptions& o) {
  auto set = scil::read_dataset(o.dataset);
  auto config = load_or_default(o.config, o.config.empty() ? set.env : "");
  if (set.env != config.env) {
    throw std::invalid_argument("dataset env '" + set.env + "' does not match config env '" + config.env + "'");
  }
  if (config.action_spec) set.spec = config.resolved_spec();
  auto& tc = config.train;
  if (o.lambda) tc.lambda = *o.lambda;
  if (o.bins) tc.bins = *o.bins;
  if (o.temperature) tc.temperature = *o.temperature;
  if (o.base_temperature) tc.base_temperature = *o.base_temperature;
  if (o.seed) tc.seed = *o.seed;
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.learning_rate) tc.learning_rate = *o.learning_rate;
  tc.validate();

  const fs::path dir = o.out.empty() ? fs::path(config.output_dir) : fs::path(o.out);
  fs::create_directories(dir);
  {
    std::ofstream snapshot(dir / "config.json");
    snapshot << scil::experiment_config_to_json(config).dump(2) << "\n";
  }

  const auto label_spec = set.spec.with_bins(tc.bins);
  std::cout << "run: " << tc.run_label() << "\nrows: " << set.size() << "\n";
  print_histogram(histogram_of(scil::batch_labels(set.actions, label_spec)), label_spec);

  const auto result = scil::train(tc, set, [&](const scil::EpochRecord& record, const scil::NetworkParams<double>& p) {
    std::cout << "epoch " << record.epoch << " pred " << scil::format_double(record.train_pred_loss) << " supcon "
              << scil::format_double(record.train_supcon_loss) << " val_silhouette "
              << scil::format_double(record.val_silhouette) << "\n";
    if (o.save_every > 0 && record.epoch % o.save_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.json", record.epoch);
      scil::write_checkpoint(p, set.env, dir / name);
    }
  });
  scil::write_checkpoint(result.params, set.env, dir / "checkpoint_final.json");
  scil::write_history_csv(result.history, dir / "history.csv");

  const Eigen::MatrixXd val_obs = scil::gather_rows(set.observations, result.split.validation);
  const Eigen::MatrixXd val_actions = scil::gather_rows(set.actions, result.split.validation);
  const auto trace = scil::forward<double>(val_obs, result.params);
  const auto labels = scil::batch_labels(val_actions, label_spec);
  const auto report = scil::embedding_report(trace.embedding(), labels);
  scil::write_embedding_report_csv(report, dir / "embedding_report.csv");

  scil::Summary summary{{"run_label", tc.run_label()},
                        {"env", set.env},
                        {"lambda", scil::format_double(tc.lambda)},
                        {"bins", std::to_string(tc.bins)},
                        {"seed", std::to_string(tc.seed)},
                        {"epochs", std::to_string(tc.epochs)},
                        {"validation_rows", std::to_string(result.split.validation.size())}};
  for (auto& kv : scil::embedding_summary(report)) summary.push_back(kv);
  scil::write_summary(summary, dir / "summary.txt");
  std::cout << "run " << tc.run_label() << " written to " << dir.string() << "\n";
  return 0;
}

// eval -----------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint, env, agent = "policy", out = "eval_result.json";
  int episodes = 100;
  std::uint64_t seed = 0;
  bool normalize_random = false;
};

int run_eval(const EvalOptions& o) {
  std::optional<scil::Checkpoint> ckpt;
  std::string env = o.env;
  if (o.agent == "policy") {
    if (o.checkpoint.empty()) throw std::invalid_argument("--agent policy requires --checkpoint");
    ckpt = scil::read_checkpoint(o.checkpoint);
    if (!env.empty() && env != ckpt->env) throw std::invalid_argument("--env does not match the checkpoint env");
    env = ckpt->env;
  } else if (o.agent != "expert" && o.agent != "random") {
    throw std::invalid_argument("--agent must be policy, expert or random");
  }
  if (env.empty()) throw std::invalid_argument("--env is required for expert and random agents");
  const auto kind = scil::task_from_name(env);

  scil::ScoreStats stats;
  if (ckpt) {
    stats = scil::evaluate_policy(ckpt->params, kind, o.episodes, o.seed);
  } else if (o.agent == "expert") {
    stats = scil::evaluate_expert(kind, o.episodes, o.seed);
  } else {
    stats = scil::evaluate_random(kind, o.episodes, o.seed);
  }
  json result{{"env", env}, {"agent", o.agent}, {"seed", o.seed}, {"stats", stats_to_json(stats)}};
  std::cout << "agent: " << o.agent << "\nenv: " << env << "\nepisodes: " << o.episodes
            << "\nmean: " << scil::format_double(stats.mean) << "\nstd: " << scil::format_double(stats.stddev)
            << "\nsuccess_rate: " << scil::format_double(stats.success_rate) << "\n";
  if (o.normalize_random) {
    const auto random = scil::evaluate_random(kind, o.episodes, o.seed);
    const double improvement = scil::normalized_improvement(stats.mean, random.mean);
    result["random_mean"] = random.mean;
    result["normalized_improvement_percent"] = improvement;
    std::cout << "random_mean: " << scil::format_double(random.mean)
              << "\nnormalized_improvement_percent: " << scil::format_double(improvement) << "\n";
  }
  std::ofstream out(o.out);
  if (!out) throw std::runtime_error("cannot open '" + o.out + "' for writing");
  out << result.dump(2) << "\n";
  return 0;
}

// loss-check -----------------------------------------------------------------

int run_loss_check(const std::string& path) {
  const auto fx = scil::read_loss_fixture(path);
  const double forward = scil::supcon_forward(fx.embeddings, fx.labels, fx.params);
  const auto backward = scil::supcon_backward(fx.embeddings, fx.labels, fx.params);
  const double fd_error = supcon_fd_error(fx.embeddings, fx.labels, fx.params, backward.grad);
  std::cout << "N: " << fx.embeddings.rows() << "  E: " << fx.embeddings.cols()
            << "  temperature: " << scil::format_double(fx.params.temperature)
            << "  base_temperature: " << scil::format_double(fx.params.base_temperature) << "\n";
  std::cout << "forward: " << scil::format_double(forward) << "\n";

  bool pass = true;
  if (fx.embeddings.rows() <= 128) {
    const double oracle = scil::supcon_oracle(fx.embeddings, fx.labels, fx.params);
    const double diff = std::abs(forward - oracle);
    const bool ok = diff < kOracleTolerance;
    pass = pass && ok;
    std::cout << "oracle: " << scil::format_double(oracle) << "  |diff|: " << scil::format_double(diff)
              << "  tolerance: " << kOracleTolerance << "  " << (ok ? "PASS" : "FAIL") << "\n";
  } else {
    std::cout << "oracle: skipped (N > 128)\n";
  }
  const bool grad_ok = fd_error < kGradientTolerance;
  pass = pass && grad_ok;
  std::cout << "gradient_norm: " << scil::format_double(backward.grad.norm()) << "\n";
  std::cout << "gradient max rel error vs central differences (h=" << kFiniteDifferenceStep
            << "): " << scil::format_double(fd_error) << "  tolerance: " << kGradientTolerance << "  "
            << (grad_ok ? "PASS" : "FAIL") << "\n";
  std::cout << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 2;
}

// analyze --------------------------------------------------------------------

int run_analyze(const std::string& checkpoint, const std::string& dataset, std::uint64_t bins, const std::string& out) {
  const auto ckpt = scil::read_checkpoint(checkpoint);
  const auto set = scil::read_dataset(dataset);
  if (set.env != ckpt.env) throw std::invalid_argument("dataset and checkpoint come from different envs");
  const auto trace = scil::forward<double>(set.observations, ckpt.params);
  const auto labels = scil::batch_labels(set.actions, set.spec.with_bins(bins));
  const auto report = scil::embedding_report(trace.embedding(), labels);
  const fs::path dir(out);
  fs::create_directories(dir);
  scil::write_embedding_report_csv(report, dir / "embedding_report.csv");
  auto summary = scil::embedding_summary(report);
  summary.insert(summary.begin(), {"bins", std::to_string(bins)});
  scil::write_summary(summary, dir / "summary.txt");
  for (const auto& [key, value] : summary) std::cout << key << ": " << value << "\n";
  return 0;
}

// compare --------------------------------------------------------------------

int run_compare(const std::string& a_path, const std::string& b_path, const std::string& out) {
  const auto a = scil::read_history_csv(a_path);
  const auto b = scil::read_history_csv(b_path);
  const auto report = scil::compare_runs(a, b);
  scil::write_comparison_csv(report, out);
  for (std::size_t h = 0; h < a.head_names.size(); ++h) {
    std::cout << "auc val_" << a.head_names[h] << ": a " << scil::format_double(report.auc_a[h]) << "  b "
              << scil::format_double(report.auc_b[h]) << "\n";
  }
  std::cout << "final silhouette delta (b - a): " << scil::format_double(report.final_silhouette_delta) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supervised contrastive imitation learning toolkit"};
  app.require_subcommand(1);
  const scil::TrainConfig defaults;

  GenOptions gen_opts;
  auto* gen = app.add_subcommand("gen", "Generate a demonstration dataset from a scripted expert");
  gen->add_option("--config", gen_opts.config, "Experiment config file (JSON)");
  gen->add_option("--env", gen_opts.env, "gridchase or dodgeaim (overrides config; default dodgeaim)");
  gen->add_option("--episodes", gen_opts.episodes, "Number of expert episodes (>= 1)")->capture_default_str();
  gen->add_option("--seed", gen_opts.seed, "Seed for initial states and observation noise")->capture_default_str();
  gen->add_option("--out", gen_opts.out, "Output dataset file")->required();
  gen->add_option("--text", gen_opts.text, "Also write a text export to this path");

  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train a policy (SCIL, or the BL baseline with --lambda 0)");
  train->add_option("--config", train_opts.config, "Experiment config file (JSON)");
  train->add_option("--dataset", train_opts.dataset, "Dataset file written by 'gen'")->required();
  train->add_option("--out", train_opts.out, "Run directory (default: config output_dir, runs/default)");
  train->add_option("--lambda", train_opts.lambda, "Contrastive loss weight; 0 trains the baseline")
      ->default_str(scil::format_double(defaults.lambda));
  train->add_option("--bins", train_opts.bins, "Bins per continuous action dim for contrastive labels")
      ->default_str(std::to_string(defaults.bins));
  train->add_option("--temperature", train_opts.temperature, "Contrastive temperature")->default_str("0.07");
  train->add_option("--base-temperature", train_opts.base_temperature, "Base temperature; loss is scaled by tau/base")
      ->default_str("0.07");
  train->add_option("--seed", train_opts.seed, "Seed for init, split and shuffling")->default_str("0");
  train->add_option("--epochs", train_opts.epochs, "Training epochs")->default_str(std::to_string(defaults.epochs));
  train->add_option("--batch-size", train_opts.batch_size, "Mini-batch size")
      ->default_str(std::to_string(defaults.batch_size));
  train->add_option("--learning-rate", train_opts.learning_rate, "Optimizer learning rate (adam)")
      ->default_str("0.001");
  train->add_option("--save-every", train_opts.save_every, "Checkpoint every N epochs (0: final only)")
      ->capture_default_str();

  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "Roll out an agent and report score statistics");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file (for --agent policy)");
  eval->add_option("--env", eval_opts.env, "Environment for expert and random agents");
  eval->add_option("--agent", eval_opts.agent, "policy, expert or random")->capture_default_str();
  eval->add_option("--episodes", eval_opts.episodes, "Rollout episodes")->capture_default_str();
  eval->add_option("--seed", eval_opts.seed, "Seed for initial states")->capture_default_str();
  eval->add_flag("--normalize-random", eval_opts.normalize_random,
                 "Also report % improvement over a seeded random agent");
  eval->add_option("--out", eval_opts.out, "Machine-readable result file (JSON)")->capture_default_str();

  std::string fixture;
  auto* check = app.add_subcommand("loss-check", "Cross-check the contrastive loss on a text fixture");
  check->add_option("--fixture", fixture, "Fixture file")->required();

  std::string an_checkpoint, an_dataset, an_out = "analysis";
  std::uint64_t an_bins = defaults.bins;
  auto* analyze = app.add_subcommand("analyze", "Embedding-space report of a checkpoint over a dataset");
  analyze->add_option("--checkpoint", an_checkpoint, "Checkpoint file")->required();
  analyze->add_option("--dataset", an_dataset, "Dataset file")->required();
  analyze->add_option("--bins", an_bins, "Bins per continuous dim for labels")->capture_default_str();
  analyze->add_option("--out", an_out, "Output directory")->capture_default_str();

  std::string cmp_a, cmp_b, cmp_out = "comparison.csv";
  auto* compare = app.add_subcommand("compare", "Compare two training histories (b - a)");
  compare->add_option("--a", cmp_a, "history.csv of run a (e.g. BL)")->required();
  compare->add_option("--b", cmp_b, "history.csv of run b (e.g. SCIL)")->required();
  compare->add_option("--out", cmp_out, "Output comparison.csv")->capture_default_str();

  std::string exp_dataset;
  auto* exporter = app.add_subcommand("export", "Print a dataset file as text");
  exporter->add_option("--dataset", exp_dataset, "Dataset file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(gen_opts);
    if (train->parsed()) return run_train(train_opts);
    if (eval->parsed()) return run_eval(eval_opts);
    if (check->parsed()) return run_loss_check(fixture);
    if (analyze->parsed()) return run_analyze(an_checkpoint, an_dataset, an_bins, an_out);
    if (compare->parsed()) return run_compare(cmp_a, cmp_b, cmp_out);
    if (exporter->parsed()) {
      scil::export_dataset_text(scil::read_dataset(exp_dataset), std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
