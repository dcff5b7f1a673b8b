#include <doctest.h>

#include <cmath>
#include <numbers>

#include "firn/graph.hpp"
#include "firn/synth.hpp"
#include "support/helpers.hpp"

using namespace firn;
using firn::testing::require_error;

namespace {

constexpr double kR = 6371.0;

ThicknessRecord synth_record(int layers, std::uint64_t seed = 1, int index = 0) {
  SynthParams p;
  p.layers = layers;
  p.seed = seed;
  return generate_segment(p, index);
}

// Minimal hand-made sample: three nodes, one step.
TemporalGraphSample tiny_sample(std::vector<double> thickness, std::vector<double> weights) {
  TemporalGraphSample s;
  s.segment_id = "tiny";
  Matrix f(3, 3);
  for (int i = 0; i < 3; ++i) {
    f(i, 0) = 70.0 + i;
    f(i, 1) = -40.0 - 2.0 * i;
    f(i, 2) = thickness[static_cast<std::size_t>(i)];
  }
  s.features.push_back(f);
  s.adjacency = Matrix::Zero(3, 3);
  s.adjacency(0, 1) = s.adjacency(1, 0) = weights[0];
  s.adjacency(0, 2) = s.adjacency(2, 0) = weights[1];
  s.adjacency(1, 2) = s.adjacency(2, 1) = weights[2];
  s.targets = Matrix::Zero(3, 5);
  return s;
}

}  // namespace

TEST_CASE("haversine analytic anchors") {
  CHECK(haversine_distance({12.5, 33.0}, {12.5, 33.0}) == 0.0);
  CHECK(std::abs(haversine_distance({0, 0}, {0, 90}) - 10007.543) < 1e-3);
  CHECK(std::abs(haversine_distance({0, 0}, {0, 90}) - kR * std::numbers::pi / 2) < 1e-9);
  CHECK(std::abs(haversine_distance({0, 0}, {0, 1}) - 111.195) < 1e-3);
  CHECK(std::abs(haversine_distance({0, 0}, {1, 0}) - kR * std::numbers::pi / 180) < 1e-9);
  // pole to pole, and symmetry at high latitude
  CHECK(std::abs(haversine_distance({90, 0}, {-90, 0}) - kR * std::numbers::pi) < 1e-6);
  const GeoPoint a{71.3, -44.2}, b{72.9, -38.1};
  CHECK(haversine_distance(a, b) == haversine_distance(b, a));
}

TEST_CASE("haversine matches the spherical law of cosines away from small angles") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
  for (int i = 0; i < 200; ++i) {
    const GeoPoint p{lat(gen), lon(gen)}, q{lat(gen), lon(gen)};
    const double r = std::numbers::pi / 180;
    const double cosc = std::sin(p.lat * r) * std::sin(q.lat * r) +
                        std::cos(p.lat * r) * std::cos(q.lat * r) * std::cos((q.lon - p.lon) * r);
    const double oracle = kR * std::acos(std::clamp(cosc, -1.0, 1.0));
    CHECK(haversine_distance(p, q) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("build_adjacency small cases") {
  SUBCASE("two nodes 2 km apart") {
    const double dlat = 2.0 / (kR * std::numbers::pi / 180);
    const std::vector<double> lat{0.0, dlat}, lon{0.0, 0.0};
    const auto a = build_adjacency(lat, lon);
    CHECK(a(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(a(1, 0) == a(0, 1));
    CHECK(a(0, 0) == 0.0);
    CHECK(a(1, 1) == 0.0);
  }
  SUBCASE("coincident nodes clamp to 1 / d_min") {
    const std::vector<double> lat{70.0, 70.0}, lon{-45.0, -45.0};
    CHECK(build_adjacency(lat, lon)(0, 1) == doctest::Approx(1000.0));
  }
  SUBCASE("three equatorial nodes") {
    const std::vector<double> lat{0, 0, 0}, lon{0, 1, 2};
    const auto a = build_adjacency(lat, lon);
    CHECK(std::abs(a(0, 1) - 1 / 111.195) < 1e-6);
    CHECK(std::abs(a(1, 2) - 1 / 111.195) < 1e-6);
    CHECK(std::abs(a(0, 2) - 1 / 222.390) < 1e-6);
  }
}

TEST_CASE("adjacency is exactly symmetric, zero-diagonal and distance-monotone") {
  const auto rec = synth_record(16, 3);
  const auto a = build_adjacency(rec.latitudes, rec.longitudes);
  REQUIRE(a.rows() == kColumns);
  CHECK((a.array() == a.transpose().array()).all());
  CHECK((a.diagonal().array() == 0.0).all());
  for (int i = 0; i < kColumns; i += 17) {
    for (int j = 0; j < kColumns; j += 5) {
      for (int k = 0; k < kColumns; k += 7) {
        if (i == j || i == k) continue;
        const double dj = haversine_distance({rec.latitudes[i], rec.longitudes[i]}, {rec.latitudes[j], rec.longitudes[j]});
        const double dk = haversine_distance({rec.latitudes[i], rec.longitudes[i]}, {rec.latitudes[k], rec.longitudes[k]});
        if (dj < dk && dj > kMinDistanceKm) CHECK(a(i, j) > a(i, k));
      }
    }
  }
}

TEST_CASE("fit and apply normalization hand examples") {
  std::vector<TemporalGraphSample> s{tiny_sample({1, 2, 3}, {2, 4, 6})};
  const auto stats = fit_normalization(s, "train");
  CHECK(stats.feature_mean[2] == doctest::Approx(2.0));
  CHECK(std::abs(stats.feature_std[2] - 0.81650) < 1e-5);
  CHECK(stats.feature_std[2] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  CHECK(stats.weight_min == 2.0);
  CHECK(stats.weight_max == 6.0);
  CHECK(stats.fitted_on == "train");

  const auto n = apply_normalization(s[0], stats);
  CHECK(std::abs(n.features[0](0, 2) + 1.22474) < 1e-5);
  CHECK(std::abs(n.features[0](1, 2)) < 1e-12);
  CHECK(std::abs(n.features[0](2, 2) - 1.22474) < 1e-5);
  CHECK(n.adjacency(0, 1) == 0.0);
  CHECK(n.adjacency(0, 2) == doctest::Approx(0.5));
  CHECK(n.adjacency(1, 2) == 1.0);
  CHECK(n.adjacency(0, 0) == 0.0);
  CHECK(n.targets == s[0].targets);

  CHECK(normalize_weight(8.0, stats) == 1.0);
  CHECK(normalize_weight(0.5, stats) == 0.0);
  NormalizationStats flat = stats;
  flat.weight_max = flat.weight_min;
  CHECK(normalize_weight(123.0, flat) == 1.0);
}

TEST_CASE("fit_normalization rejects a constant channel") {
  auto s = tiny_sample({1, 2, 3}, {1, 1, 1});
  s.features[0].col(0).setConstant(70.0);
  std::vector<TemporalGraphSample> v{s};
  require_error(ErrorKind::DegenerateChannel, [&] { fit_normalization(v); });
}

TEST_CASE("refitting on normalized training data gives zero mean and unit std") {
  std::vector<TemporalGraphSample> train;
  for (int i = 0; i < 4; ++i) train.push_back(build_temporal_sample(synth_record(16, 9, i)));
  const auto stats = fit_normalization(train);
  std::vector<TemporalGraphSample> normed;
  for (const auto& s : train) normed.push_back(apply_normalization(s, stats));
  const auto again = fit_normalization(normed);
  for (std::size_t c = 0; c < again.channels(); ++c) {
    CHECK(std::abs(again.feature_mean[c]) < 1e-9);
    CHECK(std::abs(again.feature_std[c] - 1.0) < 1e-9);
  }
  CHECK(again.weight_min == doctest::Approx(0.0));
  CHECK(again.weight_max == doctest::Approx(1.0));
  for (const auto& s : normed) {
    CHECK((s.adjacency.array() >= 0.0).all());
    CHECK((s.adjacency.array() <= 1.0).all());
    CHECK((s.adjacency.array() == s.adjacency.transpose().array()).all());
  }
}

TEST_CASE("pairwise_sum is exact on representable sums and order-stable") {
  std::vector<double> v(1000, 0.1);
  CHECK(pairwise_sum(v) == doctest::Approx(100.0).epsilon(1e-14));
  std::vector<double> ints;
  for (int i = 1; i <= 777; ++i) ints.push_back(i);
  CHECK(pairwise_sum(ints) == 777.0 * 778.0 / 2.0);
  CHECK(pairwise_sum(std::span<const double>{}) == 0.0);
}

TEST_CASE("temporal sample layer selection") {
  const auto rec = synth_record(16, 4);
  const auto s = build_temporal_sample(rec);
  REQUIRE(s.features.size() == 10);
  REQUIRE(s.targets.cols() == 5);
  CHECK(s.features[0].cols() == 3);
  // oldest feature year is the deepest of the ten feature rows; targets oldest first
  for (int c = 0; c < kColumns; c += 31) {
    for (int step = 0; step < 10; ++step) CHECK(s.features[step](c, 2) == rec.thickness(14 - step, c));
    for (int y = 0; y < 5; ++y) CHECK(s.targets(c, y) == rec.thickness(4 - y, c));
    CHECK(s.features[0](c, 0) == rec.latitudes[c]);
    CHECK(s.features[9](c, 1) == rec.longitudes[c]);
  }
  CHECK(rec.year_labels[14] == 1997);
  CHECK(rec.year_labels[5] == 2006);
  CHECK(rec.year_labels[4] == 2007);

  const auto deep = synth_record(18, 4);
  const auto sd = build_temporal_sample(deep);
  for (int step = 0; step < 10; ++step) CHECK(sd.features[step].col(2) == deep.thickness.row(14 - step).transpose().cast<double>());

  auto shallow = rec;
  shallow.thickness.conservativeResize(14, Eigen::NoChange);
  shallow.year_labels.resize(14);
  require_error(ErrorKind::InsufficientLayers, [&] { build_temporal_sample(shallow); });
  require_error(ErrorKind::InsufficientLayers, [&] { build_static_sample(shallow); });
}

TEST_CASE("static and temporal samples agree") {
  const auto rec = synth_record(17, 8, 2);
  const auto t = build_temporal_sample(rec);
  const auto s = build_static_sample(rec);
  REQUIRE(s.features.cols() == 12);
  CHECK(s.adjacency == t.adjacency);
  CHECK(s.targets == t.targets);
  for (int step = 0; step < 10; ++step) CHECK(s.features.col(2 + step) == t.features[step].col(2));
  CHECK(s.features.col(0) == t.features[0].col(0));

  auto flat = rec;
  flat.thickness.setConstant(9);
  const auto sf = build_static_sample(flat);
  CHECK((sf.features.rightCols(10).array() == 9.0).all());
}

TEST_CASE("graph dataset build and file round-trip") {
  std::vector<ThicknessRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(synth_record(16, 12, i));
  const auto plans = make_splits(std::span<const ThicknessRecord>(recs), 3);
  for (auto layout : {SampleLayout::Temporal, SampleLayout::Static}) {
    const auto g = build_graph_dataset(recs, plans[1], layout, "train");
    CHECK(g.records.size() == 10);
    CHECK(g.nodes() == kColumns);
    CHECK(g.steps() == (layout == SampleLayout::Temporal ? 10 : 1));
    CHECK(g.channels() == (layout == SampleLayout::Temporal ? 3 : 12));
    int n_test = 0;
    for (const auto& r : g.records) n_test += r.partition == Partition::Test;
    CHECK(n_test == 2);

    const auto bytes = encode_graphs(g);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FRGR");
    const auto back = decode_graphs(bytes);
    CHECK(back.layout == g.layout);
    CHECK(back.norm_scope == "train");
    CHECK(back.target_years == std::vector<int>{2007, 2008, 2009, 2010, 2011});
    CHECK(back.stats.feature_mean == g.stats.feature_mean);
    CHECK(back.stats.weight_max == g.stats.weight_max);
    REQUIRE(back.records.size() == g.records.size());
    for (std::size_t i = 0; i < g.records.size(); ++i) {
      CHECK(back.records[i].segment_id == g.records[i].segment_id);
      CHECK(back.records[i].partition == g.records[i].partition);
      CHECK(back.records[i].targets == g.records[i].targets);  // integer pixels survive f32
      CHECK((back.records[i].adjacency - g.records[i].adjacency).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((back.records[i].steps[0] - g.records[i].steps[0]).cwiseAbs().maxCoeff() < 1e-5);
    }
    CHECK(encode_graphs(back) == bytes);
  }
  // scope "all" fits on every record, so the stats differ from the train-only fit
  const auto all = build_graph_dataset(recs, plans[1], SampleLayout::Temporal, "all");
  const auto train = build_graph_dataset(recs, plans[1], SampleLayout::Temporal, "train");
  CHECK(all.stats.feature_mean != train.stats.feature_mean);
  require_error(ErrorKind::Config, [&] { build_graph_dataset(recs, plans[1], SampleLayout::Temporal, "bogus"); });
}
