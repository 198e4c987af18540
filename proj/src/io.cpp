#include "scil/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace scil {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "dataset container assumes a little-endian host");

namespace {

constexpr char kDatasetMagic[8] = {'S', 'C', 'I', 'L', 'D', 'S', 'E', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr int kCheckpointVersion = 1;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return in;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json values = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  }
  return values;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Configs

json action_spec_to_json(const ActionSpec& spec) {
  json out = json::array();
  for (const auto& dim : spec.dims()) {
    if (const auto* d = std::get_if<DiscreteDim>(&dim)) {
      out.push_back({{"kind", "discrete"}, {"cardinality", d->cardinality}});
    } else {
      const auto& c = std::get<ContinuousDim>(dim);
      out.push_back({{"kind", "continuous"}, {"lo", c.lo}, {"hi", c.hi}, {"bins", c.bins}});
    }
  }
  return out;
}

ActionSpec action_spec_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("action_spec: expected a list of dimensions");
  std::vector<DimensionSpec> dims;
  for (const auto& entry : j) {
    if (!entry.is_object() || !entry.contains("kind")) throw std::invalid_argument("action_spec: entry needs a 'kind'");
    const auto kind = entry.at("kind").get<std::string>();
    if (kind == "discrete") {
      reject_unknown_keys(entry, {"kind", "cardinality"}, "action_spec discrete dim");
      dims.push_back(DiscreteDim{entry.at("cardinality").get<std::uint64_t>()});
    } else if (kind == "continuous") {
      reject_unknown_keys(entry, {"kind", "lo", "hi", "bins"}, "action_spec continuous dim");
      ContinuousDim c{entry.at("lo").get<double>(), entry.at("hi").get<double>(), 5};
      if (entry.contains("bins")) c.bins = entry.at("bins").get<std::uint64_t>();
      dims.push_back(c);
    } else {
      throw std::invalid_argument("action_spec: unknown kind '" + kind + "'");
    }
  }
  return ActionSpec(std::move(dims));
}

json train_config_to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"temperature", c.temperature},
          {"base_temperature", c.base_temperature},
          {"bins", c.bins},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"optimizer", optimizer_name(c.optimizer)},
          {"momentum", c.momentum},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"hidden", c.hidden},
          {"embedding_dim", c.embedding_dim}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown_keys(j,
                      {"lambda", "temperature", "base_temperature", "bins", "batch_size", "epochs", "learning_rate",
                       "optimizer", "momentum", "beta1", "beta2", "adam_epsilon", "seed", "validation_fraction",
                       "hidden", "embedding_dim"},
                      "train config");
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("lambda", c.lambda);
  read("temperature", c.temperature);
  read("base_temperature", c.base_temperature);
  read("bins", c.bins);
  read("batch_size", c.batch_size);
  read("epochs", c.epochs);
  read("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  read("momentum", c.momentum);
  read("beta1", c.beta1);
  read("beta2", c.beta2);
  read("adam_epsilon", c.adam_epsilon);
  read("seed", c.seed);
  read("validation_fraction", c.validation_fraction);
  read("hidden", c.hidden);
  read("embedding_dim", c.embedding_dim);
  c.validate();
  return c;
}

ActionSpec ExperimentConfig::resolved_spec() const {
  const TaskKind kind = task_from_name(env);
  if (!action_spec) return Task::action_spec(kind);
  const ActionSpec expected = Task::action_spec(kind);
  bool ok = action_spec->size() == expected.size();
  for (std::size_t d = 0; ok && d < expected.size(); ++d) {
    ok = is_discrete((*action_spec)[d]) == is_discrete(expected[d]) &&
         head_width((*action_spec)[d]) == head_width(expected[d]);
  }
  if (!ok) throw std::invalid_argument("action_spec does not match the " + env + " action layout");
  return *action_spec;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown_keys(j, {"env", "action_spec", "output_dir", "train"}, "experiment config");
  ExperimentConfig c;
  if (!j.contains("env")) throw std::invalid_argument("experiment config: missing 'env'");
  c.env = j.at("env").get<std::string>();
  task_from_name(c.env);
  if (j.contains("action_spec")) c.action_spec = action_spec_from_json(j.at("action_spec"));
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  c.resolved_spec();
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json out{{"env", c.env}, {"output_dir", c.output_dir}, {"train", train_config_to_json(c.train)}};
  out["action_spec"] = action_spec_to_json(c.resolved_spec());
  return out;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  auto in = open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path.string() + "': " + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Dataset container

void write_dataset(const DemonstrationSet& set, const std::filesystem::path& path) {
  const json header{{"env", set.env},
                    {"action_spec", action_spec_to_json(set.spec)},
                    {"obs_dim", set.observations.cols()},
                    {"action_dims", set.actions.cols()},
                    {"num_rows", set.observations.rows()},
                    {"seed", set.seed},
                    {"episode_starts", set.episode_starts}};
  const std::string text = header.dump();
  auto out = open_out(path, std::ios::binary);
  const std::uint32_t version = kDatasetVersion;
  const std::uint64_t length = text.size();
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor obs = set.observations;
  const RowMajor actions = set.actions;
  out.write(reinterpret_cast<const char*>(obs.data()), static_cast<std::streamsize>(obs.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(actions.data()),
            static_cast<std::streamsize>(actions.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing dataset '" + path.string() + "'");
}

DemonstrationSet read_dataset(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  const std::string where = "dataset '" + path.string() + "'";
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) throw std::runtime_error(where + ": bad magic");
  if (version != kDatasetVersion) throw std::runtime_error(where + ": unsupported version " + std::to_string(version));
  if (length > (1u << 30)) throw std::runtime_error(where + ": implausible header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw std::runtime_error(where + ": truncated header");

  DemonstrationSet set;
  try {
    const json header = json::parse(text);
    set.env = header.at("env").get<std::string>();
    set.spec = action_spec_from_json(header.at("action_spec"));
    set.seed = header.at("seed").get<std::uint64_t>();
    set.episode_starts = header.at("episode_starts").get<std::vector<std::size_t>>();
    const auto rows = header.at("num_rows").get<Eigen::Index>();
    const auto obs_dim = header.at("obs_dim").get<Eigen::Index>();
    const auto action_dims = header.at("action_dims").get<Eigen::Index>();
    if (rows < 0 || obs_dim < 1 || action_dims != static_cast<Eigen::Index>(set.spec.size())) {
      throw std::runtime_error("inconsistent shape fields");
    }
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor obs(rows, obs_dim), actions(rows, action_dims);
    in.read(reinterpret_cast<char*>(obs.data()), static_cast<std::streamsize>(obs.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(actions.data()), static_cast<std::streamsize>(actions.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated payload");
    if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after payload");
    set.observations = obs;
    set.actions = actions;
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  return set;
}

void export_dataset_text(const DemonstrationSet& set, std::ostream& out) {
  out << "# env=" << set.env << "\n";
  out << "# action_spec=" << action_spec_to_json(set.spec).dump() << "\n";
  out << "# obs_dim=" << set.observations.cols() << " action_dims=" << set.actions.cols()
      << " num_rows=" << set.observations.rows() << " seed=" << set.seed << "\n";
  out << "# episode_starts=" << json(set.episode_starts).dump() << "\n";
  out << "row";
  for (Eigen::Index c = 0; c < set.observations.cols(); ++c) out << ",obs_" << c;
  for (Eigen::Index c = 0; c < set.actions.cols(); ++c) out << ",action_" << c;
  out << "\n";
  for (Eigen::Index r = 0; r < set.observations.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < set.observations.cols(); ++c) out << ',' << format_double(set.observations(r, c));
    for (Eigen::Index c = 0; c < set.actions.cols(); ++c) out << ',' << format_double(set.actions(r, c));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(const NetworkParams<double>& params, const std::string& env, const std::filesystem::path& path) {
  json layers = json::array();
  auto add = [&layers](const std::string& name, const DenseLayer<double>& layer) {
    layers.push_back({{"name", name},
                      {"rows", layer.weight.rows()},
                      {"cols", layer.weight.cols()},
                      {"weight", matrix_to_json(layer.weight)},
                      {"bias", matrix_to_json(layer.bias)}});
  };
  for (std::size_t l = 0; l < params.extractor.size(); ++l) add("extractor." + std::to_string(l), params.extractor[l]);
  for (std::size_t h = 0; h < params.heads.size(); ++h) add("head." + std::to_string(h), params.heads[h]);
  const json doc{{"format", "scil-checkpoint"},
                 {"version", kCheckpointVersion},
                 {"env", env},
                 {"layout",
                  {{"obs_dim", params.layout.obs_dim},
                   {"hidden", params.layout.hidden},
                   {"embedding_dim", params.layout.embedding_dim}}},
                 {"action_spec", action_spec_to_json(params.spec)},
                 {"layers", layers}};
  auto out = open_out(path);
  out << doc.dump(1) << "\n";
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string where = "checkpoint '" + path.string() + "'";
  try {
    const json doc = json::parse(in);
    if (doc.at("format").get<std::string>() != "scil-checkpoint") throw std::runtime_error("not a checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) throw std::runtime_error("unsupported version");
    const auto& lj = doc.at("layout");
    NetworkLayout layout{lj.at("obs_dim").get<int>(), lj.at("hidden").get<std::vector<int>>(),
                         lj.at("embedding_dim").get<int>()};
    Checkpoint ckpt{doc.at("env").get<std::string>(),
                    NetworkParams<double>(layout, action_spec_from_json(doc.at("action_spec")))};
    const auto& layers = doc.at("layers");
    std::size_t index = 0;
    bool ok = true;
    ckpt.params.for_each_layer([&](DenseLayer<double>& layer) {
      if (!ok || index >= layers.size()) {
        ok = false;
        return;
      }
      const auto& lj2 = layers.at(index++);
      const auto weight = lj2.at("weight").get<std::vector<double>>();
      const auto bias = lj2.at("bias").get<std::vector<double>>();
      if (lj2.at("rows").get<Eigen::Index>() != layer.weight.rows() ||
          lj2.at("cols").get<Eigen::Index>() != layer.weight.cols() ||
          weight.size() != static_cast<std::size_t>(layer.weight.size()) ||
          bias.size() != static_cast<std::size_t>(layer.bias.size())) {
        ok = false;
        return;
      }
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = weight[k++];
      }
      for (Eigen::Index c = 0; c < layer.bias.size(); ++c) layer.bias(c) = bias[static_cast<std::size_t>(c)];
    });
    if (!ok || index != layers.size()) throw std::runtime_error("layer shapes do not match the layout");
    if (!ckpt.params.all_finite()) throw std::runtime_error("non-finite parameter");
    return ckpt;
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Loss fixtures

LossFixture parse_loss_fixture(std::istream& in) {
  std::stringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    cleaned << line << '\n';
  }
  auto expect = [&cleaned](auto& value, const std::string& what) {
    if (!(cleaned >> value)) throw std::invalid_argument("loss fixture: could not read " + what);
  };
  long n = 0, e = 0;
  expect(n, "batch size N");
  expect(e, "embedding width E");
  if (n < 2 || e < 1) throw std::invalid_argument("loss fixture: need N >= 2 and E >= 1");
  LossFixture fx;
  fx.embeddings.resize(n, e);
  for (long i = 0; i < n; ++i) {
    for (long k = 0; k < e; ++k) expect(fx.embeddings(i, k), "embedding row " + std::to_string(i));
  }
  fx.labels.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    long long label = 0;
    expect(label, "label " + std::to_string(i));
    if (label < 0) throw std::invalid_argument("loss fixture: labels must be non-negative");
    fx.labels[static_cast<std::size_t>(i)] = static_cast<ClassLabel>(label);
  }
  expect(fx.params.temperature, "temperature");
  expect(fx.params.base_temperature, "base_temperature");
  std::string extra;
  if (cleaned >> extra) throw std::invalid_argument("loss fixture: trailing content '" + extra + "'");
  fx.params.validate();
  for (long i = 0; i < n; ++i) {
    if (!fx.embeddings.row(i).allFinite()) {
      throw std::invalid_argument("loss fixture: embedding row " + std::to_string(i) + " is not finite");
    }
    if (fx.embeddings.row(i).squaredNorm() == 0.0) {
      throw std::invalid_argument("loss fixture: embedding row " + std::to_string(i) + " is the zero vector");
    }
  }
  return fx;
}

LossFixture read_loss_fixture(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_loss_fixture(in);
}

// ---------------------------------------------------------------------------
// CSV / summary outputs

void write_history_csv(const TrainingHistory& history, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch,train_pred_loss,train_supcon_loss,train_total";
  for (const auto& h : history.head_names) out << ",val_" << h;
  out << ",val_silhouette\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << ',' << format_double(r.train_pred_loss) << ',' << format_double(r.train_supcon_loss) << ','
        << format_double(r.train_total);
    for (double v : r.val_head_errors) out << ',' << format_double(v);
    out << ',' << format_double(r.val_silhouette) << '\n';
  }
}

TrainingHistory read_history_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string where = "history '" + path.string() + "'";
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(where + ": empty file");
  const auto header = split(line);
  if (header.size() < 5 || header[0] != "epoch" || header.back() != "val_silhouette") {
    throw std::runtime_error(where + ": unexpected header");
  }
  TrainingHistory history;
  for (std::size_t k = 4; k + 1 < header.size(); ++k) {
    if (header[k].rfind("val_", 0) != 0) throw std::runtime_error(where + ": unexpected column " + header[k]);
    history.head_names.push_back(header[k].substr(4));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::runtime_error(where + ": ragged row");
    EpochRecord r;
    try {
      r.epoch = std::stoi(cells[0]);
      r.train_pred_loss = std::stod(cells[1]);
      r.train_supcon_loss = std::stod(cells[2]);
      r.train_total = std::stod(cells[3]);
      for (std::size_t k = 4; k + 1 < cells.size(); ++k) r.val_head_errors.push_back(std::stod(cells[k]));
      r.val_silhouette = std::stod(cells.back());
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": malformed number in row '" + line + "'");
    }
    history.epochs.push_back(std::move(r));
  }
  return history;
}

void write_comparison_csv(const ComparisonReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch";
  for (const auto& m : report.metrics) out << ",delta_" << m;
  out << '\n';
  for (std::size_t e = 0; e < report.deltas.size(); ++e) {
    out << e + 1;
    for (double v : report.deltas[e]) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_embedding_report_csv(const EmbeddingReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "index,label,pc1,pc2\n";
  for (Eigen::Index i = 0; i < report.projection.rows(); ++i) {
    out << i << ',' << report.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < 2; ++c) {
      out << ',' << format_double(c < report.projection.cols() ? report.projection(i, c) : 0.0);
    }
    out << '\n';
  }
}

void write_summary(const Summary& summary, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& [key, value] : summary) out << key << '=' << value << '\n';
}

Summary embedding_summary(const EmbeddingReport& report) {
  auto optional_value = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("absent"); };
  Summary s;
  s.emplace_back("num_samples", std::to_string(report.labels.size()));
  s.emplace_back("num_classes", std::to_string(report.class_counts.size()));
  s.emplace_back("silhouette", optional_value(report.silhouette));
  s.emplace_back("intra_class_cosine_mean", optional_value(report.cosine.intra));
  s.emplace_back("inter_class_cosine_mean", optional_value(report.cosine.inter));
  s.emplace_back("projection", "pca");
  return s;
}

}  // namespace scil
