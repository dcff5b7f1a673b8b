#include "firn/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "firn/error.hpp"
#include "firn/key_value.hpp"
#include "firn/random.hpp"

namespace firn {

namespace {

constexpr int kStaticWaves = 3;
constexpr int kArModes = 3;  // one constant mode plus two plane waves
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct PlaneWave {
  double u = 0.0;  // unit direction in (lat, lon) degree space
  double v = 0.0;
  double phase = 0.0;

  double operator()(double lat, double lon, double scale) const {
    return std::sin(kTwoPi * (u * lat + v * lon) / scale + phase);
  }
};

PlaneWave random_wave(Rng& rng) {
  const double angle = rng.uniform(0.0, kTwoPi);
  return {std::cos(angle), std::sin(angle), rng.uniform(0.0, kTwoPi)};
}

void check(const SynthParams& p) {
  if (p.n_segments < 0 || p.layers < 2) throw Error(ErrorKind::Config, "synth needs n_segments >= 0 and layers >= 2");
  if (!(p.temporal_ar >= 0.0 && p.temporal_ar <= 1.0)) throw Error(ErrorKind::Config, "temporal_ar must lie in [0, 1]");
  if (p.noise_std < 0.0 || p.temporal_std < 0.0 || p.spatial_amplitude < 0.0)
    throw Error(ErrorKind::Config, "synth amplitudes must be nonnegative");
  if (!(p.spatial_scale > 0.0) || !(p.flight_step > 0.0))
    throw Error(ErrorKind::Config, "spatial_scale and flight_step must be positive");
}

}  // namespace

SynthParams parse_synth_params(const std::string& text) {
  SynthParams p;
  KeyValueReader kv(text, "synth params");
  kv.read("n_segments", p.n_segments);
  kv.read("layers", p.layers);
  kv.read("base_thickness", p.base_thickness);
  kv.read("spatial_amplitude", p.spatial_amplitude);
  kv.read("spatial_scale", p.spatial_scale);
  kv.read("temporal_ar", p.temporal_ar);
  kv.read("temporal_std", p.temporal_std);
  kv.read("trend", p.trend);
  kv.read("noise_std", p.noise_std);
  kv.read("flight_step", p.flight_step);
  kv.read("surface_year", p.surface_year);
  kv.read("surface_row", p.surface_row);
  kv.read("seed", p.seed);
  kv.finish();
  check(p);
  return p;
}

SynthParams load_synth_params(const std::filesystem::path& path) { return parse_synth_params(read_text_file(path)); }

std::string to_text(const SynthParams& p) {
  KeyValueWriter w;
  w.add("n_segments", p.n_segments);
  w.add("layers", p.layers);
  w.add("base_thickness", p.base_thickness);
  w.add("spatial_amplitude", p.spatial_amplitude);
  w.add("spatial_scale", p.spatial_scale);
  w.add("temporal_ar", p.temporal_ar);
  w.add("temporal_std", p.temporal_std);
  w.add("trend", p.trend);
  w.add("noise_std", p.noise_std);
  w.add("flight_step", p.flight_step);
  w.add("surface_year", p.surface_year);
  w.add("surface_row", p.surface_row);
  w.add("seed", p.seed);
  return w.str();
}

ThicknessRecord generate_segment(const SynthParams& params, int segment_index) {
  check(params);
  const int years = params.layers - 1;

  // The static field is shared by every segment of a corpus.
  Rng field_rng(derive_seed({params.seed, 0x4649454c44ULL}));
  std::array<PlaneWave, kStaticWaves> static_waves;
  for (auto& w : static_waves) w = random_wave(field_rng);

  Rng rng(derive_seed({params.seed, static_cast<std::uint64_t>(segment_index), 0x5345474dULL}));
  const double lat0 = rng.uniform(68.0, 76.0);
  const double lon0 = rng.uniform(-50.0, -35.0);
  const double heading = rng.uniform(0.0, kTwoPi);

  ThicknessRecord r;
  r.segment_id = "synth_" + std::to_string(params.seed) + "_" + std::to_string(segment_index);
  r.latitudes.resize(kColumns);
  r.longitudes.resize(kColumns);
  for (int c = 0; c < kColumns; ++c) {
    r.latitudes[c] = lat0 + c * params.flight_step * std::cos(heading);
    r.longitudes[c] = lon0 + c * params.flight_step * std::sin(heading);
  }

  std::array<PlaneWave, kArModes - 1> ar_waves;
  for (auto& w : ar_waves) w = random_wave(rng);

  // AR(1) mode coefficients, oldest year first, stationary from the start.
  const double mode_std = params.temporal_std / std::sqrt(static_cast<double>(kArModes));
  const double innovation = std::sqrt(std::max(0.0, 1.0 - params.temporal_ar * params.temporal_ar));
  std::vector<std::array<double, kArModes>> modes(static_cast<std::size_t>(years));
  for (int t = 0; t < years; ++t) {
    for (int j = 0; j < kArModes; ++j) {
      const double z = rng.normal();
      double v = t == 0 ? mode_std * z : params.temporal_ar * modes[t - 1][j] + innovation * mode_std * z;
      modes[t][j] = std::clamp(v, -kArClip * mode_std, kArClip * mode_std);
    }
  }

  const double static_gain = params.spatial_amplitude / std::sqrt(static_cast<double>(kStaticWaves));
  const double centre = 0.5 * (years - 1);
  r.thickness.resize(years, kColumns);
  for (int t = 0; t < years; ++t) {
    const int row = years - 1 - t;  // records store the youngest layer first
    for (int c = 0; c < kColumns; ++c) {
      const double lat = r.latitudes[c];
      const double lon = r.longitudes[c];
      double value = params.base_thickness + params.trend * (t - centre) + modes[t][0];
      for (const auto& w : static_waves) value += static_gain * w(lat, lon, params.spatial_scale);
      for (int j = 1; j < kArModes; ++j)
        value += modes[t][j] * std::numbers::sqrt2 * ar_waves[j - 1](lat, lon, params.spatial_scale);

      long px = std::lround(value + params.noise_std * rng.normal());
      for (int attempt = 0; px < 1 && attempt < 64; ++attempt) px = std::lround(value + params.noise_std * rng.normal());
      r.thickness(row, c) = static_cast<std::int32_t>(std::max(1L, px));
    }
  }

  r.year_labels.resize(static_cast<std::size_t>(years));
  for (int t = 0; t < years; ++t) r.year_labels[t] = params.surface_year - 1 - t;
  r.surface_row.assign(kColumns, params.surface_row);
  return r;
}

std::vector<ThicknessRecord> generate_corpus(const SynthParams& params) {
  std::vector<ThicknessRecord> out;
  out.reserve(static_cast<std::size_t>(params.n_segments));
  for (int i = 0; i < params.n_segments; ++i) out.push_back(generate_segment(params, i));
  return out;
}

double column_difference_bound(const SynthParams& p) {
  // Each plane wave changes by at most 2*pi*step/scale per unit amplitude
  // between adjacent columns; the final +1 covers rounding to whole pixels.
  const double lipschitz = kTwoPi * p.flight_step / p.spatial_scale;
  const double static_part = p.spatial_amplitude * std::sqrt(static_cast<double>(kStaticWaves));
  const double mode_std = p.temporal_std / std::sqrt(static_cast<double>(kArModes));
  const double ar_part = (kArModes - 1) * std::numbers::sqrt2 * kArClip * mode_std;
  return lipschitz * (static_part + ar_part) + 1.0;
}

Matrix persistence_baseline(const TemporalGraphSample& sample) {
  if (sample.features.empty()) throw Error(ErrorKind::ShapeMismatch, "sample has no feature graphs");
  const auto n = sample.features.front().rows();
  Vector mean = Vector::Zero(n);
  for (const auto& f : sample.features) mean += f.col(f.cols() - 1);
  mean /= static_cast<double>(sample.features.size());
  return mean.replicate(1, kTargetYears);
}

}  // namespace firn
