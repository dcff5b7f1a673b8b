#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "firn/ingest.hpp"
#include "firn/types.hpp"

namespace firn {

inline constexpr double kEarthRadiusKm = 6371.0;
/// Distances below this are clamped so coincident columns get a finite weight.
inline constexpr double kMinDistanceKm = 1e-3;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
};

/// Great-circle distance in kilometres.
double haversine_distance(GeoPoint p, GeoPoint q);

/// Inverse-distance weights of the fully connected graph over the columns;
/// zero diagonal, symmetric by construction.
Matrix build_adjacency(std::span<const double> latitudes, std::span<const double> longitudes);

/// Ten per-year graphs sharing one adjacency. Feature columns are latitude,
/// longitude and that year's thickness; steps run oldest to newest. Targets
/// are the five youngest layers, oldest first, in pixels.
struct TemporalGraphSample {
  std::string segment_id;
  std::vector<Matrix> features;
  Matrix adjacency;
  Matrix targets;
};

/// Baseline input: one graph whose node features are latitude, longitude and
/// the ten feature-year thicknesses oldest to newest.
struct StaticGraphSample {
  std::string segment_id;
  Matrix features;
  Matrix adjacency;
  Matrix targets;
};

struct NormalizationStats {
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  double weight_min = 0.0;
  double weight_max = 0.0;
  std::string fitted_on;

  std::size_t channels() const { return feature_mean.size(); }
};

TemporalGraphSample build_temporal_sample(const ThicknessRecord& record);
StaticGraphSample build_static_sample(const ThicknessRecord& record);

/// Pooled z-score statistics over every node of every graph, and min/max over
/// every off-diagonal weight. Population standard deviation.
NormalizationStats fit_normalization(std::span<const TemporalGraphSample> samples, std::string fitted_on = {});
NormalizationStats fit_normalization(std::span<const StaticGraphSample> samples, std::string fitted_on = {});

/// Z-scores features, min-max scales weights into [0, 1]; targets untouched.
TemporalGraphSample apply_normalization(TemporalGraphSample sample, const NormalizationStats& stats);
StaticGraphSample apply_normalization(StaticGraphSample sample, const NormalizationStats& stats);

double normalize_weight(double w, const NormalizationStats& stats);

/// Deterministic pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

enum class SampleLayout : std::uint8_t { Temporal = 0, Static = 1 };
enum class Partition : std::uint8_t { Train = 0, Test = 1 };

/// Model-ready sample: one or more feature steps over one adjacency.
struct GraphRecord {
  std::string segment_id;
  Partition partition = Partition::Train;
  std::vector<Matrix> steps;
  Matrix adjacency;
  Matrix targets;
};

GraphRecord to_graph_record(const TemporalGraphSample& s, Partition p);
GraphRecord to_graph_record(const StaticGraphSample& s, Partition p);

struct GraphDataset {
  SampleLayout layout = SampleLayout::Temporal;
  std::string norm_scope = "train";
  std::vector<int> target_years{2007, 2008, 2009, 2010, 2011};  // oldest first
  NormalizationStats stats;
  std::vector<GraphRecord> records;

  int nodes() const;
  int steps() const;
  int channels() const;
};

// Graph file: little-endian binary.
//
//   char[4]  magic "FRGR"
//   u32      format version (1)
//   u8       layout (0 temporal, 1 static)
//   u32      nodes N, steps T, channels C, targets Y
//   i32[Y]   target years, oldest first
//   u32      length-prefixed norm scope string
//   stats:   u32 channel count C, f64[C] mean, f64[C] std, f64 weight min,
//            f64 weight max, length-prefixed fitted-on string
//   u32      sample count
//   per sample:
//     length-prefixed id, u8 partition (0 train, 1 test)
//     f32[T*N*C] features, step-major then node then channel
//     f32[N*N]   adjacency, row-major
//     f32[N*Y]   targets, row-major
inline constexpr std::uint32_t kGraphFileVersion = 1;

std::vector<std::uint8_t> encode_graphs(const GraphDataset& data);
GraphDataset decode_graphs(std::span<const std::uint8_t> bytes);
void save_graphs(const std::filesystem::path& path, const GraphDataset& data);
GraphDataset load_graphs(const std::filesystem::path& path);

/// Builds normalized graph records for one split; stats come from the train
/// partition, or from every record when `norm_scope` is "all".
GraphDataset build_graph_dataset(std::span<const ThicknessRecord> records, const SplitPlan& plan,
                                 SampleLayout layout, const std::string& norm_scope);

}  // namespace firn
