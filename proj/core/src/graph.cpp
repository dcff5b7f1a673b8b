#include "firn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "firn/binary_io.hpp"
#include "firn/error.hpp"

namespace firn {

namespace {

double hav(double theta) {
  const double s = std::sin(theta / 2.0);
  return s * s;
}

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

double haversine_distance(GeoPoint p, GeoPoint q) {
  const double phi_p = p.lat * kDegToRad;
  const double phi_q = q.lat * kDegToRad;
  const double h = hav(phi_q - phi_p) + std::cos(phi_p) * std::cos(phi_q) * hav((q.lon - p.lon) * kDegToRad);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

Matrix build_adjacency(std::span<const double> latitudes, std::span<const double> longitudes) {
  if (latitudes.size() != longitudes.size())
    throw Error(ErrorKind::ShapeMismatch, "latitude/longitude length mismatch");
  const auto n = static_cast<Eigen::Index>(latitudes.size());
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = haversine_distance({latitudes[i], longitudes[i]}, {latitudes[j], longitudes[j]});
      const double w = 1.0 / std::max(d, kMinDistanceKm);
      a(i, j) = w;
      a(j, i) = w;
    }
  }
  return a;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const auto half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

void require_usable(const ThicknessRecord& record) {
  if (!record.usable()) {
    throw Error(ErrorKind::InsufficientLayers, record.segment_id + " has " + std::to_string(record.layers()) +
                                                   " layer lines, need " + std::to_string(kMinLayers));
  }
  if (static_cast<std::size_t>(record.columns()) != record.latitudes.size())
    throw Error(ErrorKind::ShapeMismatch, record.segment_id + ": geolocation width mismatch");
}

// Thickness rows run youngest first: rows [0, 5) are the targets and rows
// [5, 15) the feature years.
int feature_row(int step) { return kTargetYears + kFeatureYears - 1 - step; }
int target_row(int year) { return kTargetYears - 1 - year; }

Matrix targets_of(const ThicknessRecord& record) {
  const int n = record.columns();
  Matrix t(n, kTargetYears);
  for (int y = 0; y < kTargetYears; ++y)
    for (int c = 0; c < n; ++c) t(c, y) = record.thickness(target_row(y), c);
  return t;
}

struct ChannelPool {
  std::vector<std::vector<double>> values;
  double wmin = 0.0;
  double wmax = 0.0;
  bool have_weights = false;

  explicit ChannelPool(std::size_t channels) : values(channels) {}

  void add_features(const Matrix& f) {
    if (static_cast<std::size_t>(f.cols()) != values.size())
      throw Error(ErrorKind::ShapeMismatch, "feature width " + std::to_string(f.cols()) + " vs " +
                                                std::to_string(values.size()));
    for (Eigen::Index c = 0; c < f.cols(); ++c)
      for (Eigen::Index r = 0; r < f.rows(); ++r) values[c].push_back(f(r, c));
  }

  void add_weights(const Matrix& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (i == j) continue;
        const double w = a(i, j);
        if (!have_weights) {
          wmin = wmax = w;
          have_weights = true;
        }
        wmin = std::min(wmin, w);
        wmax = std::max(wmax, w);
      }
  }

  NormalizationStats finish(std::string fitted_on) const {
    NormalizationStats s;
    s.fitted_on = std::move(fitted_on);
    for (std::size_t c = 0; c < values.size(); ++c) {
      const auto& v = values[c];
      if (v.empty()) throw Error(ErrorKind::DegenerateChannel, "no samples to fit");
      const double mean = pairwise_sum(v) / static_cast<double>(v.size());
      std::vector<double> sq(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
      const double sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size()));
      if (!(sd > 0.0))
        throw Error(ErrorKind::DegenerateChannel, "feature channel " + std::to_string(c) + " is constant");
      s.feature_mean.push_back(mean);
      s.feature_std.push_back(sd);
    }
    s.weight_min = wmin;
    s.weight_max = wmax;
    return s;
  }
};

Eigen::Index channels_of(const TemporalGraphSample& s) { return s.features.front().cols(); }
Eigen::Index channels_of(const StaticGraphSample& s) { return s.features.cols(); }

void add_to_pool(ChannelPool& pool, const TemporalGraphSample& s) {
  for (const auto& f : s.features) pool.add_features(f);
  pool.add_weights(s.adjacency);
}

void add_to_pool(ChannelPool& pool, const StaticGraphSample& s) {
  pool.add_features(s.features);
  pool.add_weights(s.adjacency);
}

void normalize_features(Matrix& f, const NormalizationStats& stats) {
  if (static_cast<std::size_t>(f.cols()) != stats.channels())
    throw Error(ErrorKind::ShapeMismatch, "feature width " + std::to_string(f.cols()) + " vs stats width " +
                                              std::to_string(stats.channels()));
  for (Eigen::Index c = 0; c < f.cols(); ++c)
    f.col(c) = (f.col(c).array() - stats.feature_mean[c]) / stats.feature_std[c];
}

void normalize_adjacency(Matrix& a, const NormalizationStats& stats) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = i == j ? 0.0 : normalize_weight(a(i, j), stats);
}

}  // namespace

double normalize_weight(double w, const NormalizationStats& stats) {
  const double span = stats.weight_max - stats.weight_min;
  if (!(span > 0.0)) return 1.0;
  return std::clamp((w - stats.weight_min) / span, 0.0, 1.0);
}

TemporalGraphSample build_temporal_sample(const ThicknessRecord& record) {
  require_usable(record);
  const int n = record.columns();
  TemporalGraphSample s;
  s.segment_id = record.segment_id;
  s.adjacency = build_adjacency(record.latitudes, record.longitudes);
  s.targets = targets_of(record);
  s.features.reserve(kFeatureYears);
  for (int step = 0; step < kFeatureYears; ++step) {
    Matrix f(n, 3);
    for (int c = 0; c < n; ++c) {
      f(c, 0) = record.latitudes[c];
      f(c, 1) = record.longitudes[c];
      f(c, 2) = record.thickness(feature_row(step), c);
    }
    s.features.push_back(std::move(f));
  }
  return s;
}

StaticGraphSample build_static_sample(const ThicknessRecord& record) {
  require_usable(record);
  const int n = record.columns();
  StaticGraphSample s;
  s.segment_id = record.segment_id;
  s.adjacency = build_adjacency(record.latitudes, record.longitudes);
  s.targets = targets_of(record);
  s.features.resize(n, 2 + kFeatureYears);
  for (int c = 0; c < n; ++c) {
    s.features(c, 0) = record.latitudes[c];
    s.features(c, 1) = record.longitudes[c];
    for (int step = 0; step < kFeatureYears; ++step) s.features(c, 2 + step) = record.thickness(feature_row(step), c);
  }
  return s;
}

NormalizationStats fit_normalization(std::span<const TemporalGraphSample> samples, std::string fitted_on) {
  if (samples.empty() || samples.front().features.empty())
    throw Error(ErrorKind::DegenerateChannel, "empty training set");
  ChannelPool pool(static_cast<std::size_t>(channels_of(samples.front())));
  for (const auto& s : samples) add_to_pool(pool, s);
  return pool.finish(std::move(fitted_on));
}

NormalizationStats fit_normalization(std::span<const StaticGraphSample> samples, std::string fitted_on) {
  if (samples.empty()) throw Error(ErrorKind::DegenerateChannel, "empty training set");
  ChannelPool pool(static_cast<std::size_t>(channels_of(samples.front())));
  for (const auto& s : samples) add_to_pool(pool, s);
  return pool.finish(std::move(fitted_on));
}

TemporalGraphSample apply_normalization(TemporalGraphSample sample, const NormalizationStats& stats) {
  for (auto& f : sample.features) normalize_features(f, stats);
  normalize_adjacency(sample.adjacency, stats);
  return sample;
}

StaticGraphSample apply_normalization(StaticGraphSample sample, const NormalizationStats& stats) {
  normalize_features(sample.features, stats);
  normalize_adjacency(sample.adjacency, stats);
  return sample;
}

GraphRecord to_graph_record(const TemporalGraphSample& s, Partition p) {
  return {s.segment_id, p, s.features, s.adjacency, s.targets};
}

GraphRecord to_graph_record(const StaticGraphSample& s, Partition p) {
  return {s.segment_id, p, {s.features}, s.adjacency, s.targets};
}

int GraphDataset::nodes() const { return records.empty() ? 0 : static_cast<int>(records.front().adjacency.rows()); }
int GraphDataset::steps() const { return records.empty() ? 0 : static_cast<int>(records.front().steps.size()); }
int GraphDataset::channels() const {
  return records.empty() || records.front().steps.empty() ? 0 : static_cast<int>(records.front().steps.front().cols());
}

namespace {

constexpr std::string_view kGraphMagic = "FRGR";

}  // namespace

std::vector<std::uint8_t> encode_graphs(const GraphDataset& data) {
  const int n = data.nodes();
  const int t = data.steps();
  const int c = data.channels();
  const int y = data.records.empty() ? kTargetYears : static_cast<int>(data.records.front().targets.cols());

  ByteWriter w;
  w.put_magic(kGraphMagic);
  w.put(kGraphFileVersion);
  w.put(static_cast<std::uint8_t>(data.layout));
  w.put(static_cast<std::uint32_t>(n));
  w.put(static_cast<std::uint32_t>(t));
  w.put(static_cast<std::uint32_t>(c));
  w.put(static_cast<std::uint32_t>(y));
  if (static_cast<int>(data.target_years.size()) != y)
    throw Error(ErrorKind::ShapeMismatch, "target year labels differ from target width");
  for (int year : data.target_years) w.put(static_cast<std::int32_t>(year));
  w.put_string(data.norm_scope);
  w.put(static_cast<std::uint32_t>(data.stats.channels()));
  for (double v : data.stats.feature_mean) w.put(v);
  for (double v : data.stats.feature_std) w.put(v);
  w.put(data.stats.weight_min);
  w.put(data.stats.weight_max);
  w.put_string(data.stats.fitted_on);
  w.put(static_cast<std::uint32_t>(data.records.size()));
  for (const auto& r : data.records) {
    if (r.adjacency.rows() != n || static_cast<int>(r.steps.size()) != t || r.targets.cols() != y)
      throw Error(ErrorKind::ShapeMismatch, "graph record '" + r.segment_id + "' differs from dataset shape");
    w.put_string(r.segment_id);
    w.put(static_cast<std::uint8_t>(r.partition));
    for (const auto& f : r.steps) {
      if (f.rows() != n || f.cols() != c)
        throw Error(ErrorKind::ShapeMismatch, "graph record '" + r.segment_id + "' feature shape");
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < c; ++k) w.put(static_cast<float>(f(i, k)));
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) w.put(static_cast<float>(r.adjacency(i, j)));
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < y; ++k) w.put(static_cast<float>(r.targets(i, k)));
  }
  return std::move(w).bytes();
}

GraphDataset decode_graphs(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic(kGraphMagic);
  const auto version = in.get<std::uint32_t>();
  if (version != kGraphFileVersion)
    throw Error(ErrorKind::Format, "unsupported graph file version " + std::to_string(version));
  GraphDataset d;
  const auto layout = in.get<std::uint8_t>();
  if (layout > 1) throw Error(ErrorKind::Format, "unknown sample layout");
  d.layout = static_cast<SampleLayout>(layout);
  const auto n = in.get<std::uint32_t>();
  const auto t = in.get<std::uint32_t>();
  const auto c = in.get<std::uint32_t>();
  const auto y = in.get<std::uint32_t>();
  if (y > 1024) throw Error(ErrorKind::Format, "implausible target width");
  d.target_years.resize(y);
  for (auto& year : d.target_years) year = in.get<std::int32_t>();
  d.norm_scope = in.get_string();
  const auto sc = in.get<std::uint32_t>();
  if (sc != c) throw Error(ErrorKind::Format, "stats width differs from channel count");
  d.stats.feature_mean.resize(sc);
  d.stats.feature_std.resize(sc);
  for (auto& v : d.stats.feature_mean) v = in.get<double>();
  for (auto& v : d.stats.feature_std) v = in.get<double>();
  d.stats.weight_min = in.get<double>();
  d.stats.weight_max = in.get<double>();
  d.stats.fitted_on = in.get_string();
  const auto count = in.get<std::uint32_t>();
  const std::uint64_t per_sample = 4ULL * (static_cast<std::uint64_t>(t) * n * c + static_cast<std::uint64_t>(n) * n + n * y);
  for (std::uint32_t s = 0; s < count; ++s) {
    GraphRecord r;
    r.segment_id = in.get_string();
    const auto part = in.get<std::uint8_t>();
    if (part > 1) throw Error(ErrorKind::Format, "unknown partition tag");
    r.partition = static_cast<Partition>(part);
    if (in.remaining() < per_sample) throw Error(ErrorKind::Format, "truncated graph sample");
    for (std::uint32_t step = 0; step < t; ++step) {
      Matrix f(n, c);
      for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t k = 0; k < c; ++k) f(i, k) = in.get<float>();
      r.steps.push_back(std::move(f));
    }
    r.adjacency.resize(n, n);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < n; ++j) r.adjacency(i, j) = in.get<float>();
    r.targets.resize(n, y);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t k = 0; k < y; ++k) r.targets(i, k) = in.get<float>();
    d.records.push_back(std::move(r));
  }
  if (!in.at_end()) throw Error(ErrorKind::Format, "trailing bytes in graph file");
  return d;
}

void save_graphs(const std::filesystem::path& path, const GraphDataset& data) {
  write_file_atomic(path, encode_graphs(data));
}

GraphDataset load_graphs(const std::filesystem::path& path) { return decode_graphs(read_file(path)); }

GraphDataset build_graph_dataset(std::span<const ThicknessRecord> records, const SplitPlan& plan,
                                 SampleLayout layout, const std::string& norm_scope) {
  if (norm_scope != "train" && norm_scope != "all")
    throw Error(ErrorKind::Config, "norm scope must be 'train' or 'all', got '" + norm_scope + "'");
  const std::unordered_set<std::string> train(plan.train_ids.begin(), plan.train_ids.end());
  const std::unordered_set<std::string> test(plan.test_ids.begin(), plan.test_ids.end());

  GraphDataset out;
  out.target_years.clear();
  out.layout = layout;
  out.norm_scope = norm_scope;
  const std::string fitted_on = "trial " + std::to_string(plan.trial_index) + " seed " + std::to_string(plan.seed) +
                                (norm_scope == "all" ? " (all records)" : " (train split)");

  auto run = [&](auto build) {
    using Sample = decltype(build(records.front()));
    std::vector<Sample> samples;
    std::vector<Partition> parts;
    for (const auto& r : records) {
      const bool in_train = train.contains(r.segment_id);
      if (!in_train && !test.contains(r.segment_id)) continue;
      samples.push_back(build(r));
      parts.push_back(in_train ? Partition::Train : Partition::Test);
    }
    if (samples.empty()) throw Error(ErrorKind::Config, "split selects no records");
    for (const auto& r : records) {
      if (!train.contains(r.segment_id) && !test.contains(r.segment_id)) continue;
      std::vector<int> years;
      for (int k = kTargetYears - 1; k >= 0; --k) years.push_back(r.year_labels[static_cast<std::size_t>(k)]);
      if (out.target_years.empty()) out.target_years = years;
      else if (out.target_years != years)
        throw Error(ErrorKind::Config, "record '" + r.segment_id + "' has different target years");
    }
    ChannelPool pool(static_cast<std::size_t>(channels_of(samples.front())));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (parts[i] != Partition::Train && norm_scope != "all") continue;
      add_to_pool(pool, samples[i]);
    }
    out.stats = pool.finish(fitted_on);
    for (std::size_t i = 0; i < samples.size(); ++i)
      out.records.push_back(to_graph_record(apply_normalization(std::move(samples[i]), out.stats), parts[i]));
  };
  if (layout == SampleLayout::Temporal)
    run([](const ThicknessRecord& r) { return build_temporal_sample(r); });
  else
    run([](const ThicknessRecord& r) { return build_static_sample(r); });
  return out;
}

}  // namespace firn
