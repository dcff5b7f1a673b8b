#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "firn/types.hpp"

namespace firn {

/// One labeled echogram: geolocation per column plus the row index of every
/// layer top in every column. Row 0 of `layer_tops` is the surface.
struct SegmentRecord {
  std::string segment_id;
  std::vector<double> latitudes;
  std::vector<double> longitudes;
  IndexGrid layer_tops;
  int surface_year = 2012;

  int columns() const { return static_cast<int>(layer_tops.cols()); }
  int layers() const { return static_cast<int>(layer_tops.rows()); }

  bool operator==(const SegmentRecord&) const = default;
};

/// Per-column annual layer thicknesses in pixels, youngest layer first.
///
/// Row t is bounded above by layer top t and below by top t + 1, so row 0 is
/// the layer directly beneath the surface line. `surface_row` keeps the
/// absolute surface position so the record converts back to layer tops.
struct ThicknessRecord {
  std::string segment_id;
  std::vector<double> latitudes;
  std::vector<double> longitudes;
  IndexGrid thickness;
  std::vector<int> year_labels;
  std::vector<std::int32_t> surface_row;

  int columns() const { return static_cast<int>(thickness.cols()); }
  /// Number of layer lines including the surface.
  int layers() const { return static_cast<int>(thickness.rows()) + 1; }
  bool usable(int min_layers = kMinLayers) const { return layers() >= min_layers; }

  bool operator==(const ThicknessRecord&) const = default;
};

struct SplitPlan {
  int trial_index = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Row of the first white pixel of every white run, per column.
IndexGrid extract_layer_tops(const Mask& mask);

/// Consecutive differences of layer tops; rejects non-increasing columns.
IndexGrid compute_thicknesses(const IndexGrid& layer_tops);

/// Checks geolocation ranges, shapes and monotone tops.
void validate(const SegmentRecord& record);

ThicknessRecord to_thickness_record(const SegmentRecord& record);
SegmentRecord to_segment_record(const ThicknessRecord& record);

std::vector<ThicknessRecord> filter_usable(std::span<const ThicknessRecord> records,
                                           int min_layers = kMinLayers);

std::vector<SplitPlan> make_splits(std::span<const std::string> ids, std::uint64_t seed,
                                   int n_trials = 5, double train_fraction = 0.8);
std::vector<SplitPlan> make_splits(std::span<const ThicknessRecord> records, std::uint64_t seed,
                                   int n_trials = 5, double train_fraction = 0.8);

// Dataset file: little-endian binary, one record per segment.
//
//   char[4]  magic "FRDS"
//   u32      format version (1)
//   u32      record count
//   per record:
//     u32          id byte length, then the UTF-8 id bytes
//     i32          surface year
//     u32          columns C
//     u32          layer lines L
//     f64[C]       latitudes (degrees)
//     f64[C]       longitudes (degrees)
//     i32[L*C]     layer tops, layer-major
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(std::span<const SegmentRecord> records);
std::vector<SegmentRecord> decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const std::filesystem::path& path, std::span<const SegmentRecord> records);
void save_dataset(const std::filesystem::path& path, std::span<const ThicknessRecord> records);
std::vector<SegmentRecord> load_dataset(const std::filesystem::path& path);
std::vector<ThicknessRecord> load_thickness_dataset(const std::filesystem::path& path);

/// Whitespace- or comma-separated "lat lon" rows; '#' starts a comment.
void read_geolocation(const std::filesystem::path& path, std::vector<double>& latitudes,
                      std::vector<double>& longitudes);

/// Netpbm mask (P1/P2/P4/P5). PGM values above half of maxval are white;
/// PBM 0 bits are white.
Mask read_mask(const std::filesystem::path& path);

struct IngestSummary {
  std::vector<SegmentRecord> accepted;
  std::vector<std::string> rejected;  // "id: reason"
  int filtered_out = 0;
};

/// Reads every mask under `mask_dir` with a matching geolocation table under
/// `geo_dir` (`<id>.txt` or `<id>.csv`), sorted by id.
IngestSummary ingest_directory(const std::filesystem::path& mask_dir,
                               const std::filesystem::path& geo_dir, int min_layers = kMinLayers,
                               int surface_year = 2012);

}  // namespace firn
