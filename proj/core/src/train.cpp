#include "firn/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "firn/binary_io.hpp"
#include "firn/checkpoint.hpp"
#include "firn/error.hpp"
#include "firn/key_value.hpp"
#include "firn/optim.hpp"
#include "firn/random.hpp"
#include "firn/synth.hpp"

namespace firn {

namespace {

std::vector<ModelKind> parse_model_list(const std::string& raw) {
  std::vector<ModelKind> out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(parse_model_kind(item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw Error(ErrorKind::Config, "'model' lists no model kinds");
  return out;
}

std::string join_models(const std::vector<ModelKind>& kinds) {
  std::string s;
  for (auto k : kinds) s += (s.empty() ? "" : ",") + std::string(to_string(k));
  return s;
}

void check(const TrainConfig& c) {
  if (c.epochs < 0) throw Error(ErrorKind::Config, "epochs must be >= 0");
  if (c.trials < 1) throw Error(ErrorKind::Config, "trials must be >= 1");
  if (c.cheb_order < 1 || c.cheb_order > 5) throw Error(ErrorKind::Config, "cheb_order must lie in [1, 5]");
  if (c.hidden < 1) throw Error(ErrorKind::Config, "hidden must be >= 1");
  if (!(c.learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning_rate must be positive");
  if (c.norm_scope != "train" && c.norm_scope != "all")
    throw Error(ErrorKind::Config, "norm_scope must be 'train' or 'all'");
}

std::uint64_t kind_tag(ModelKind k) { return static_cast<std::uint64_t>(k) + 1; }

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  KeyValueReader kv(text, "train config");
  std::string models;
  if (kv.read("model", models)) c.models = parse_model_list(models);
  kv.read("epochs", c.epochs);
  kv.read("lr", c.learning_rate);
  kv.read("dropout", c.dropout);
  kv.read("cheb_k", c.cheb_order);
  kv.read("hidden", c.hidden);
  kv.read("stacked", c.stacked);
  kv.read("seed", c.seed);
  kv.read("norm_scope", c.norm_scope);
  kv.read("trials", c.trials);
  kv.read("train_fraction", c.train_fraction);
  kv.read("min_layers", c.min_layers);
  kv.read("dataset", c.dataset);
  kv.read("graphs", c.graphs);
  kv.read("out", c.output_dir);
  kv.read("save_checkpoints", c.save_checkpoints);
  kv.finish();
  check(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  auto c = parse_train_config(read_text_file(path));
  // Relative paths in a config file resolve against the file's directory.
  const auto base = path.parent_path();
  for (auto* p : {&c.dataset, &c.graphs, &c.output_dir})
    if (!p->empty() && p->is_relative()) *p = base / *p;
  return c;
}

std::string to_text(const TrainConfig& c) {
  KeyValueWriter w;
  w.add("model", join_models(c.models));
  w.add("epochs", c.epochs);
  w.add("lr", c.learning_rate);
  w.add("dropout", c.dropout);
  w.add("cheb_k", c.cheb_order);
  w.add("hidden", c.hidden);
  w.add("stacked", c.stacked);
  w.add("seed", c.seed);
  w.add("norm_scope", c.norm_scope);
  w.add("trials", c.trials);
  w.add("train_fraction", c.train_fraction);
  w.add("min_layers", c.min_layers);
  return w.str();
}

ModelConfig model_config_for(const TrainConfig& config, ModelKind kind) {
  ModelConfig m = default_model_config(kind, config.cheb_order);
  m.hidden = config.hidden;
  m.dropout = config.dropout;
  m.stacked = config.stacked && kind != ModelKind::Gcn;
  return m;
}

std::vector<PreparedSample> prepare_samples(const GraphDataset& data, std::optional<Partition> partition,
                                            bool with_laplacian) {
  std::vector<PreparedSample> out;
  for (const auto& r : data.records) {
    if (partition && r.partition != *partition) continue;
    PreparedSample s;
    s.segment_id = r.segment_id;
    s.steps = r.steps;
    s.targets = r.targets;
    if (with_laplacian) s.laplacian = scaled_laplacian(r.adjacency).matrix;
    out.push_back(std::move(s));
  }
  return out;
}

RmseResult evaluate_rmse(std::span<const Matrix> predictions, std::span<const Matrix> targets) {
  if (predictions.size() != targets.size())
    throw Error(ErrorKind::ShapeMismatch, std::to_string(predictions.size()) + " predictions for " +
                                              std::to_string(targets.size()) + " targets");
  if (predictions.empty()) throw Error(ErrorKind::ShapeMismatch, "no predictions to evaluate");
  const auto years = predictions.front().cols();
  std::vector<std::vector<double>> sq(static_cast<std::size_t>(years));
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const auto& p = predictions[s];
    const auto& t = targets[s];
    if (p.rows() != t.rows() || p.cols() != t.cols() || p.cols() != years)
      throw Error(ErrorKind::ShapeMismatch, "sample " + std::to_string(s) + ": prediction " +
                                                std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                                " vs target " + std::to_string(t.rows()) + "x" +
                                                std::to_string(t.cols()));
    for (Eigen::Index y = 0; y < years; ++y)
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double e = p(i, y) - t(i, y);
        sq[y].push_back(e * e);
      }
  }
  RmseResult r;
  double pooled = 0.0;
  std::size_t count = 0;
  for (const auto& v : sq) {
    const double s = pairwise_sum(v);
    r.per_year.push_back(std::sqrt(s / static_cast<double>(v.size())));
    pooled += s;
    count += v.size();
  }
  r.total = std::sqrt(pooled / static_cast<double>(count));
  return r;
}

std::pair<double, double> target_moments(std::span<const PreparedSample> samples) {
  std::vector<double> values;
  for (const auto& s : samples) values.insert(values.end(), s.targets.data(), s.targets.data() + s.targets.size());
  if (values.empty()) return {0.0, 1.0};
  const double mean = pairwise_sum(values) / static_cast<double>(values.size());
  for (double& v : values) v = (v - mean) * (v - mean);
  const double sd = std::sqrt(pairwise_sum(values) / static_cast<double>(values.size()));
  if (!(sd > 0.0) || !std::isfinite(sd)) return {std::isfinite(mean) ? mean : 0.0, 1.0};
  return {mean, sd};
}

std::vector<Matrix> predict_all(const Parameters& params, std::span<const PreparedSample> samples) {
  std::vector<Matrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(forward(params, s.input()));
  return out;
}

TrialResult run_trial(const TrainConfig& config, ModelKind kind, std::span<const PreparedSample> train,
                      std::span<const PreparedSample> test, int trial_index) {
  const auto start = std::chrono::steady_clock::now();
  const auto trial_seed = derive_seed({config.seed, static_cast<std::uint64_t>(trial_index), kind_tag(kind)});

  TrialResult result;
  auto model_config = model_config_for(config, kind);
  std::tie(model_config.target_mean, model_config.target_scale) = target_moments(train);
  result.params = initialize_parameters(model_config, trial_seed);
  auto& report = result.report;
  report.model = std::string(to_string(kind));
  report.trial_index = trial_index;
  report.seed = trial_seed;

  AdamOptions adam_options;
  adam_options.learning_rate = config.learning_rate;
  auto adam = make_adam_state(result.params, adam_options);
  Parameters grad = result.params.zeros_like();

  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed({trial_seed, static_cast<std::uint64_t>(epoch), 0x4f524452ULL}));
    shuffle_rng.shuffle(order);

    std::vector<double> losses;
    losses.reserve(order.size());
    for (auto idx : order) {
      grad.set_zero();
      ForwardOptions fo;
      fo.training = true;
      fo.dropout_key = {trial_seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)};
      const double loss = loss_and_gradient(result.params, train[idx].input(), train[idx].targets, fo, grad);
      if (!std::isfinite(loss))
        throw Error(ErrorKind::DivergedTraining, report.model + " trial " + std::to_string(trial_index) +
                                                     ": non-finite loss at epoch " + std::to_string(epoch));
      losses.push_back(loss);
      adam_step(result.params, grad, adam);
    }
    const double mean_loss = losses.empty() ? 0.0 : pairwise_sum(losses) / static_cast<double>(losses.size());
    report.epoch_losses.push_back(mean_loss);
    spdlog::debug("{} trial {} epoch {} loss {:.6f}", report.model, trial_index, epoch, mean_loss);
  }

  if (!train.empty()) {
    std::vector<Matrix> train_targets;
    for (const auto& s : train) train_targets.push_back(s.targets);
    report.train_rmse = evaluate_rmse(predict_all(result.params, train), train_targets).total;
  }
  if (!test.empty()) {
    result.predictions = predict_all(result.params, test);
    for (const auto& s : test) {
      result.test_ids.push_back(s.segment_id);
      result.targets.push_back(s.targets);
    }
    const auto rmse = evaluate_rmse(result.predictions, result.targets);
    report.per_year_rmse = rmse.per_year;
    report.total_rmse = rmse.total;
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

MeanStd mean_and_sample_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = pairwise_sum(values) / n;
  if (values.size() > 1) {
    std::vector<double> sq;
    for (double v : values) sq.push_back((v - r.mean) * (v - r.mean));
    r.std = std::sqrt(pairwise_sum(sq) / (n - 1.0));
  }
  return r;
}

int ModelSummary::completed() const {
  int n = 0;
  for (const auto& t : trials) n += t.ok() ? 1 : 0;
  return n;
}

const ModelSummary* ExperimentReport::find(std::string_view model) const {
  for (const auto& m : models)
    if (m.model == model) return &m;
  return nullptr;
}

bool ExperimentReport::all_ok() const {
  for (const auto& m : models)
    for (const auto& t : m.trials)
      if (!t.ok()) return false;
  return true;
}

ModelSummary summarize(std::string model, std::vector<TrialReport> trials) {
  ModelSummary s;
  s.model = std::move(model);
  std::vector<double> totals;
  std::vector<std::vector<double>> years;
  for (const auto& t : trials) {
    if (!t.ok()) continue;
    totals.push_back(t.total_rmse);
    if (years.size() < t.per_year_rmse.size()) years.resize(t.per_year_rmse.size());
    for (std::size_t y = 0; y < t.per_year_rmse.size(); ++y) years[y].push_back(t.per_year_rmse[y]);
  }
  for (const auto& y : years) s.per_year.push_back(mean_and_sample_std(y));
  s.total = mean_and_sample_std(totals);
  s.trials = std::move(trials);
  return s;
}

std::string predictions_csv(const std::vector<std::string>& ids, std::span<const Matrix> predictions,
                            std::span<const Matrix> targets, std::span<const int> target_years) {
  std::ostringstream out;
  out.precision(17);
  out << "segment_id,node,year,truth,prediction\n";
  for (std::size_t s = 0; s < predictions.size(); ++s)
    for (Eigen::Index y = 0; y < predictions[s].cols(); ++y)
      for (Eigen::Index i = 0; i < predictions[s].rows(); ++i)
        out << ids[s] << ',' << i << ',' << target_years[static_cast<std::size_t>(y)] << ',' << targets[s](i, y)
            << ',' << predictions[s](i, y) << '\n';
  return out.str();
}

nlohmann::json to_json(const TrialReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["trial"] = r.trial_index;
  j["seed"] = r.seed;
  j["per_year_rmse"] = r.per_year_rmse;
  j["total_rmse"] = r.total_rmse;
  j["train_rmse"] = r.train_rmse;
  j["epoch_losses"] = r.epoch_losses;
  j["error"] = r.error.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.error);
  return j;
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["format"] = "firn-experiment-report/1";
  j["target_years"] = r.target_years;
  j["provenance"] = {{"config_hash", r.config_hash}, {"dataset_hash", r.dataset_hash}, {"config", r.config_text}};
  auto& models = j["models"] = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json mj;
    mj["model"] = m.model;
    mj["completed_trials"] = m.completed();
    for (const auto& y : m.per_year) mj["per_year"].push_back({{"mean", y.mean}, {"std", y.std}});
    mj["total"] = {{"mean", m.total.mean}, {"std", m.total.std}};
    for (const auto& t : m.trials) mj["trials"].push_back(to_json(t));
    models.push_back(std::move(mj));
  }
  return j;
}

std::string table_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "model";
  for (int y : r.target_years) out << ',' << y;
  out << ",Total\n";
  char buf[64];
  auto cell = [&](const MeanStd& m) {
    std::snprintf(buf, sizeof(buf), "%.3f \xC2\xB1 %.3f", m.mean, m.std);
    return std::string(buf);
  };
  for (const auto& m : r.models) {
    out << m.model;
    for (const auto& y : m.per_year) out << ',' << cell(y);
    out << ',' << cell(m.total) << '\n';
  }
  return out.str();
}

void write_experiment_report(const std::filesystem::path& dir, const ExperimentReport& report) {
  write_file_atomic(dir / "table.csv", table_csv(report));
  write_file_atomic(dir / "report.json", to_json(report).dump(2) + "\n");
}

namespace {

std::vector<int> target_years_of(const ThicknessRecord& r) {
  std::vector<int> years;
  for (int y = 0; y < kTargetYears; ++y) years.push_back(r.year_labels[static_cast<std::size_t>(kTargetYears - 1 - y)]);
  return years;
}

std::string dataset_fingerprint(std::span<const ThicknessRecord> records) {
  std::vector<SegmentRecord> segs;
  for (const auto& r : records) segs.push_back(to_segment_record(r));
  const auto bytes = encode_dataset(segs);
  return hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

void write_trial_artifacts(const TrainConfig& config, const TrialResult& result, const std::vector<int>& years,
                           const NormalizationStats* stats) {
  if (config.output_dir.empty()) return;
  const auto dir = config.output_dir / result.report.model;
  const auto stem = "trial_" + std::to_string(result.report.trial_index);
  auto j = to_json(result.report);
  j["target_years"] = years;
  j["test_ids"] = result.test_ids;
  j["predictions"] = stem + "_predictions.csv";
  if (stats != nullptr) {
    j["normalization"] = {{"feature_mean", stats->feature_mean}, {"feature_std", stats->feature_std},
                          {"weight_min", stats->weight_min},     {"weight_max", stats->weight_max},
                          {"fitted_on", stats->fitted_on}};
  }
  write_file_atomic(dir / (stem + ".json"), j.dump(2) + "\n");
  write_file_atomic(dir / (stem + "_predictions.csv"),
                    predictions_csv(result.test_ids, result.predictions, result.targets, years));
  if (config.save_checkpoints && result.report.ok()) save_checkpoint(dir / (stem + ".ckpt"), result.params);
}

TrialReport guarded_trial(const TrainConfig& config, ModelKind kind, std::span<const PreparedSample> train,
                          std::span<const PreparedSample> test, int trial, const std::vector<int>& years,
                          const NormalizationStats& stats) {
  try {
    auto result = run_trial(config, kind, train, test, trial);
    spdlog::info("{} trial {}: test RMSE {:.4f} px, train RMSE {:.4f} px ({:.1f} s)", result.report.model, trial,
                 result.report.total_rmse, result.report.train_rmse, result.report.wall_time);
    write_trial_artifacts(config, result, years, &stats);
    return result.report;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DivergedTraining) throw;
    spdlog::error("{}", e.what());
    TrialReport r;
    r.model = std::string(to_string(kind));
    r.trial_index = trial;
    r.error = e.what();
    return r;
  }
}

}  // namespace

ExperimentReport run_experiment(const TrainConfig& config, std::span<const ThicknessRecord> all_records) {
  check(config);
  const auto records = filter_usable(all_records, config.min_layers);
  if (records.size() < 2) throw Error(ErrorKind::Config, "need at least 2 usable records, have " + std::to_string(records.size()));

  ExperimentReport report;
  report.target_years = target_years_of(records.front());
  report.config_text = to_text(config);
  report.config_hash = hex64(fnv1a(report.config_text));
  report.dataset_hash = dataset_fingerprint(records);

  const auto plans = make_splits(std::span<const ThicknessRecord>(records), config.seed, config.trials,
                                 config.train_fraction);
  std::map<std::string, std::vector<TrialReport>> trials;
  std::vector<TrialReport> persistence;

  for (const auto& plan : plans) {
    spdlog::info("trial {}: {} train / {} test records, split seed {}", plan.trial_index, plan.train_ids.size(),
                 plan.test_ids.size(), plan.seed);

    // Persistence reference on the raw test records.
    {
      std::vector<Matrix> preds, targets;
      const std::set<std::string> test(plan.test_ids.begin(), plan.test_ids.end());
      for (const auto& r : records) {
        if (!test.contains(r.segment_id)) continue;
        const auto s = build_temporal_sample(r);
        preds.push_back(persistence_baseline(s));
        targets.push_back(s.targets);
      }
      const auto rmse = evaluate_rmse(preds, targets);
      TrialReport t;
      t.model = "persistence";
      t.trial_index = plan.trial_index;
      t.per_year_rmse = rmse.per_year;
      t.total_rmse = rmse.total;
      persistence.push_back(std::move(t));
    }

    for (const auto layout : {SampleLayout::Temporal, SampleLayout::Static}) {
      std::vector<ModelKind> kinds;
      for (auto k : config.models)
        if ((k == ModelKind::Gcn) == (layout == SampleLayout::Static)) kinds.push_back(k);
      if (kinds.empty()) continue;

      const auto graphs = build_graph_dataset(records, plan, layout, config.norm_scope);
      const bool needs_graph = config.cheb_order > 1 &&
                               std::any_of(kinds.begin(), kinds.end(), [](auto k) { return k != ModelKind::Lstm; });
      const auto train = prepare_samples(graphs, Partition::Train, needs_graph);
      const auto test = prepare_samples(graphs, Partition::Test, needs_graph);
      for (auto kind : kinds)
        trials[std::string(to_string(kind))].push_back(
            guarded_trial(config, kind, train, test, plan.trial_index, report.target_years, graphs.stats));
    }
  }

  for (auto kind : config.models) {
    const auto name = std::string(to_string(kind));
    report.models.push_back(summarize(name, std::move(trials[name])));
  }
  report.models.push_back(summarize("persistence", std::move(persistence)));

  if (!config.output_dir.empty()) {
    write_file_atomic(config.output_dir / "config.txt", report.config_text);
    write_experiment_report(config.output_dir, report);
  }
  return report;
}

ExperimentReport run_graph_trial(const TrainConfig& config, const GraphDataset& graphs) {
  check(config);
  if (config.models.size() != 1) throw Error(ErrorKind::Config, "graph-file training takes exactly one model kind");
  const auto kind = config.models.front();
  const bool static_layout = graphs.layout == SampleLayout::Static;
  if ((kind == ModelKind::Gcn) != static_layout)
    throw Error(ErrorKind::ShapeMismatch, std::string(to_string(kind)) + " cannot train on a " +
                                              (static_layout ? "static" : "temporal") + " graph file");

  ExperimentReport report;
  report.target_years = graphs.target_years;
  report.config_text = to_text(config);
  report.config_hash = hex64(fnv1a(report.config_text));
  const auto bytes = encode_graphs(graphs);
  report.dataset_hash = hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));

  const bool needs_graph = config.cheb_order > 1 && kind != ModelKind::Lstm;
  const auto train = prepare_samples(graphs, Partition::Train, needs_graph);
  const auto test = prepare_samples(graphs, Partition::Test, needs_graph);
  if (train.empty() || test.empty()) throw Error(ErrorKind::Config, "graph file needs both train and test samples");
  report.models.push_back(summarize(std::string(to_string(kind)),
                                    {guarded_trial(config, kind, train, test, 0, report.target_years, graphs.stats)}));
  if (!config.output_dir.empty()) {
    write_file_atomic(config.output_dir / "config.txt", report.config_text);
    write_experiment_report(config.output_dir, report);
  }
  return report;
}

}  // namespace firn
