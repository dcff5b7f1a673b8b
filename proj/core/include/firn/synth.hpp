#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "firn/graph.hpp"
#include "firn/ingest.hpp"

namespace firn {

/// Synthetic flight-line corpus. Thickness per column and year is
///
///   base + static_field(lat, lon) + ar_field_t(lat, lon) + trend * (t - centre) + noise
///
/// where static_field is a fixed mixture of plane waves over lat/lon, and
/// ar_field_t is a segment-local mixture whose coefficients follow an AR(1)
/// process across years (oldest first). Values are rounded to whole pixels.
struct SynthParams {
  int n_segments = 100;
  int layers = kMinLayers;           // layer lines, surface included
  double base_thickness = 20.0;      // px
  double spatial_amplitude = 4.0;    // px, static field
  double spatial_scale = 0.01;       // degrees, wavelength of both fields
  double temporal_ar = 0.8;          // AR(1) coefficient, [0, 1]
  double temporal_std = 4.0;         // px, stationary std of the AR field
  double trend = 0.0;                // px per year, positive = younger layers thicker
  double noise_std = 2.0;            // px, i.i.d. per node and year
  double flight_step = 1.3e-4;       // degrees between adjacent columns
  int surface_year = 2012;
  int surface_row = 20;
  std::uint64_t seed = 0;
};

/// AR coefficients are clipped to this many stationary deviations.
inline constexpr double kArClip = 4.0;

SynthParams parse_synth_params(const std::string& text);
SynthParams load_synth_params(const std::filesystem::path& path);
std::string to_text(const SynthParams& params);

/// Deterministic per (params.seed, index).
ThicknessRecord generate_segment(const SynthParams& params, int segment_index);
std::vector<ThicknessRecord> generate_corpus(const SynthParams& params);

/// Bound on |thickness(c + 1) - thickness(c)| when noise_std = 0.
double column_difference_bound(const SynthParams& params);

/// Predicts every target year as the mean of the node's ten feature-year
/// thicknesses. Expects an unnormalized sample.
Matrix persistence_baseline(const TemporalGraphSample& sample);

}  // namespace firn
