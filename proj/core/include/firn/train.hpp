#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "firn/graph.hpp"
#include "firn/ingest.hpp"
#include "firn/model.hpp"

namespace firn {

struct TrainConfig {
  std::vector<ModelKind> models{ModelKind::GcnLstm};
  int epochs = 150;
  double learning_rate = 0.01;
  double dropout = 0.2;
  int cheb_order = 3;
  int hidden = 64;
  bool stacked = false;
  std::uint64_t seed = 0;
  std::string norm_scope = "train";
  int trials = 5;
  double train_fraction = 0.8;
  int min_layers = kMinLayers;
  std::filesystem::path dataset;
  /// When set, train one trial on this graph file's partitions instead.
  std::filesystem::path graphs;
  std::filesystem::path output_dir;
  bool save_checkpoints = true;
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Resolved configuration in the same key-value syntax it is read from.
std::string to_text(const TrainConfig& config);

ModelConfig model_config_for(const TrainConfig& config, ModelKind kind);

/// Graph sample with its scaled Laplacian precomputed.
struct PreparedSample {
  std::string segment_id;
  std::vector<Matrix> steps;
  Matrix laplacian;
  Matrix targets;

  ModelInput input() const { return {steps, laplacian.size() != 0 ? &laplacian : nullptr}; }
};

std::vector<PreparedSample> prepare_samples(const GraphDataset& data, std::optional<Partition> partition,
                                            bool with_laplacian);

struct RmseResult {
  std::vector<double> per_year;
  double total = 0.0;
};

/// Per-year RMSE over every node of every sample, and the pooled RMSE over all
/// node-year entries.
RmseResult evaluate_rmse(std::span<const Matrix> predictions, std::span<const Matrix> targets);

struct TrialReport {
  std::string model;
  int trial_index = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_year_rmse;
  double total_rmse = 0.0;
  double train_rmse = 0.0;
  std::vector<double> epoch_losses;
  double wall_time = 0.0;  // seconds; never serialized into reports
  std::string error;

  bool ok() const { return error.empty(); }
};

struct TrialResult {
  TrialReport report;
  Parameters params;
  std::vector<std::string> test_ids;
  std::vector<Matrix> predictions;
  std::vector<Matrix> targets;
};

/// Mean and population deviation over every training target entry, used as
/// the model's output affine; (0, 1) for an empty or constant set.
std::pair<double, double> target_moments(std::span<const PreparedSample> samples);

std::vector<Matrix> predict_all(const Parameters& params, std::span<const PreparedSample> samples);

/// Trains from a fresh initialization and evaluates on `test` with dropout
/// off. Throws DivergedTraining on a non-finite loss.
TrialResult run_trial(const TrainConfig& config, ModelKind kind, std::span<const PreparedSample> train,
                      std::span<const PreparedSample> test, int trial_index);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) deviation; 0 for one value
};

MeanStd mean_and_sample_std(std::span<const double> values);

struct ModelSummary {
  std::string model;
  std::vector<MeanStd> per_year;
  MeanStd total;
  std::vector<TrialReport> trials;

  int completed() const;
};

struct ExperimentReport {
  std::vector<int> target_years;
  std::vector<ModelSummary> models;
  std::string config_hash;
  std::string dataset_hash;
  std::string config_text;

  const ModelSummary* find(std::string_view model) const;
  bool all_ok() const;
};

ModelSummary summarize(std::string model, std::vector<TrialReport> trials);

/// Five split plans over the usable records; every configured model plus the
/// persistence reference on each plan. Writes artifacts when output_dir is set.
ExperimentReport run_experiment(const TrainConfig& config, std::span<const ThicknessRecord> records);

/// Single trial on a prebuilt graph file's train/test partitions.
ExperimentReport run_graph_trial(const TrainConfig& config, const GraphDataset& graphs);

std::string table_csv(const ExperimentReport& report);
nlohmann::json to_json(const TrialReport& report);
nlohmann::json to_json(const ExperimentReport& report);

/// "segment_id,node,year,truth,prediction" rows.
std::string predictions_csv(const std::vector<std::string>& ids, std::span<const Matrix> predictions,
                            std::span<const Matrix> targets, std::span<const int> target_years);

void write_experiment_report(const std::filesystem::path& dir, const ExperimentReport& report);

}  // namespace firn
