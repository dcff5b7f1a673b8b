#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "firn/binary_io.hpp"
#include "firn/checkpoint.hpp"
#include "firn/report.hpp"
#include "firn/synth.hpp"
#include "firn/train.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace firn;
using firn::testing::require_error;
using firn::testing::TempDir;

namespace {

std::vector<ThicknessRecord> small_corpus(int n, std::uint64_t seed = 21) {
  SynthParams p;
  p.n_segments = n;
  p.seed = seed;
  return generate_corpus(p);
}

TrainConfig small_config() {
  TrainConfig c;
  c.hidden = 4;
  c.epochs = 2;
  c.trials = 2;
  c.seed = 5;
  return c;
}

struct Split {
  std::vector<PreparedSample> train, test;
};

Split prepared(const std::vector<ThicknessRecord>& recs, SampleLayout layout) {
  const auto plans = make_splits(std::span<const ThicknessRecord>(recs), 1);
  const auto g = build_graph_dataset(recs, plans[0], layout, "train");
  return {prepare_samples(g, Partition::Train, true), prepare_samples(g, Partition::Test, true)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("evaluate_rmse hand examples") {
  const Matrix t = Matrix::Constant(4, 5, 10.0);
  std::vector<Matrix> targets{t, t};
  auto r = evaluate_rmse(targets, targets);
  CHECK(r.total == 0.0);
  for (double v : r.per_year) CHECK(v == 0.0);

  std::vector<Matrix> preds{t, t};
  for (auto& p : preds) p.col(0).array() += 3.0;
  r = evaluate_rmse(preds, targets);
  CHECK(r.per_year == std::vector<double>{3, 0, 0, 0, 0});
  CHECK(r.total == doctest::Approx(3.0 / std::sqrt(5.0)).epsilon(1e-15));

  Matrix p1 = Matrix::Zero(2, 5), t1 = Matrix::Zero(2, 5);
  p1(0, 2) = 1.0;
  p1(1, 2) = -2.0;
  r = evaluate_rmse(std::vector<Matrix>{p1}, std::vector<Matrix>{t1});
  CHECK(r.per_year[2] == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));

  require_error(ErrorKind::ShapeMismatch, [&] { evaluate_rmse(std::vector<Matrix>{p1}, targets); });
  require_error(ErrorKind::ShapeMismatch,
                [&] { evaluate_rmse(std::vector<Matrix>{p1}, std::vector<Matrix>{Matrix::Zero(3, 5)}); });
}

TEST_CASE("pooled total squares to the mean of squared per-year values") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Matrix> p, t;
    for (int s = 0; s < 1 + trial % 4; ++s) {
      p.push_back(oracle::random_matrix(17, 5, gen, 8.0));
      t.push_back(oracle::random_matrix(17, 5, gen, 8.0));
    }
    const auto r = evaluate_rmse(p, t);
    double mean_sq = 0;
    for (double v : r.per_year) mean_sq += v * v / 5.0;
    CHECK(std::abs(r.total * r.total - mean_sq) <= 1e-12 * std::max(1.0, mean_sq));
    for (double v : r.per_year) CHECK(v >= 0.0);
  }
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> flat{4, 4, 4, 4, 4};
  CHECK(mean_and_sample_std(flat).mean == 4.0);
  CHECK(mean_and_sample_std(flat).std == 0.0);
  const std::vector<double> v{4, 5, 6, 5, 4};
  const auto m = mean_and_sample_std(v);
  CHECK(m.mean == doctest::Approx(4.8).epsilon(1e-15));
  CHECK(std::abs(m.std - 0.83666) < 1e-5);
  CHECK(m.std == doctest::Approx(std::sqrt(0.7)).epsilon(1e-14));
  const std::vector<double> one{3.5};
  CHECK(mean_and_sample_std(one).std == 0.0);
}

TEST_CASE("target moments are population statistics of every target entry") {
  PreparedSample a, b;
  a.targets = Matrix::Constant(2, 5, 1.0);
  b.targets = Matrix::Constant(2, 5, 3.0);
  const std::vector<PreparedSample> v{a, b};
  const auto [mean, scale] = target_moments(v);
  CHECK(mean == 2.0);
  CHECK(scale == 1.0);
  b.targets(0, 0) = 7.0;
  const std::vector<PreparedSample> w{a, b};
  double m = 0, s = 0;
  for (const auto& p : w) m += p.targets.sum();
  m /= 20.0;
  for (const auto& p : w) s += (p.targets.array() - m).square().sum();
  CHECK(target_moments(w).first == doctest::Approx(m).epsilon(1e-15));
  CHECK(target_moments(w).second == doctest::Approx(std::sqrt(s / 20.0)).epsilon(1e-15));
  const std::vector<PreparedSample> flat{a};
  CHECK(target_moments(flat) == std::pair<double, double>{1.0, 1.0});
  CHECK(target_moments(std::span<const PreparedSample>{}) == std::pair<double, double>{0.0, 1.0});
}

TEST_CASE("summaries skip failed trials") {
  std::vector<TrialReport> trials(3);
  for (int i = 0; i < 3; ++i) {
    trials[i].total_rmse = 4.0 + i;
    trials[i].per_year_rmse = {1, 2, 3, 4, 5};
  }
  trials[1].error = "diverged";
  const auto s = summarize("gcn_lstm", trials);
  CHECK(s.completed() == 2);
  CHECK(s.total.mean == 5.0);
  CHECK(s.per_year.size() == 5);
}

TEST_CASE("train config parsing") {
  const auto c = parse_train_config(
      "model = gcn_lstm, lstm\nepochs = 7\nlr = 0.02\ncheb_k = 2\nhidden = 8\nstacked = true\nseed = 99\n"
      "norm_scope = all\ntrials = 3\n");
  CHECK(c.models == std::vector<ModelKind>{ModelKind::GcnLstm, ModelKind::Lstm});
  CHECK(c.epochs == 7);
  CHECK(c.learning_rate == 0.02);
  CHECK(c.cheb_order == 2);
  CHECK(c.stacked);
  CHECK(c.seed == 99);
  CHECK(c.norm_scope == "all");
  const auto again = parse_train_config(to_text(c));
  CHECK(to_text(again) == to_text(c));
  require_error(ErrorKind::Config, [] { parse_train_config("epochz = 3\n"); });
  require_error(ErrorKind::Config, [] { parse_train_config("model = rnn\n"); });
  require_error(ErrorKind::Config, [] { parse_train_config("cheb_k = 9\n"); });
  require_error(ErrorKind::Config, [] { parse_train_config("norm_scope = test\n"); });

  TempDir dir("cfg");
  {
    std::ofstream f(dir / "t.cfg");
    f << "dataset = d.frds\nout = runs/a\n";
  }
  const auto loaded = load_train_config(dir / "t.cfg");
  CHECK(loaded.dataset == dir.path() / "d.frds");
  CHECK(loaded.output_dir == dir.path() / "runs/a");

  const auto lstm = model_config_for(c, ModelKind::Lstm);
  CHECK(lstm.cheb_order == 1);
  CHECK(lstm.hidden == 8);
  CHECK(model_config_for(c, ModelKind::Gcn).in_channels == 12);
  CHECK_FALSE(model_config_for(c, ModelKind::Gcn).stacked);
}

TEST_CASE("zero epochs evaluates the initialized model") {
  const auto recs = small_corpus(5);
  const auto s = prepared(recs, SampleLayout::Temporal);
  auto cfg = small_config();
  cfg.epochs = 0;
  const auto r = run_trial(cfg, ModelKind::GcnLstm, s.train, s.test, 0);
  auto mc = model_config_for(cfg, ModelKind::GcnLstm);
  std::tie(mc.target_mean, mc.target_scale) = target_moments(s.train);
  const auto init = initialize_parameters(mc, r.report.seed);
  CHECK(r.params.config.target_scale > 1.0);
  CHECK(parameter_hash(r.params) == parameter_hash(init));
  CHECK(r.report.epoch_losses.empty());
  const auto expect = evaluate_rmse(predict_all(init, s.test), r.targets);
  CHECK(r.report.total_rmse == expect.total);
}

TEST_CASE("trials are bit-reproducible and evaluation leaves parameters alone") {
  const auto recs = small_corpus(6);
  for (auto kind : {ModelKind::GcnLstm, ModelKind::Gcn, ModelKind::Lstm}) {
    const auto s = prepared(recs, kind == ModelKind::Gcn ? SampleLayout::Static : SampleLayout::Temporal);
    const auto cfg = small_config();
    const auto a = run_trial(cfg, kind, s.train, s.test, 1);
    const auto b = run_trial(cfg, kind, s.train, s.test, 1);
    CHECK(to_json(a.report).dump() == to_json(b.report).dump());
    CHECK(encode_checkpoint(a.params) == encode_checkpoint(b.params));
    CHECK(a.report.epoch_losses.size() == 2);
    CHECK(a.report.per_year_rmse.size() == 5);
    CHECK(to_json(a.report).dump() != to_json(run_trial(cfg, kind, s.train, s.test, 2).report).dump());

    const auto hash = parameter_hash(a.params);
    predict_all(a.params, s.test);
    CHECK(parameter_hash(a.params) == hash);
  }
}

TEST_CASE("non-finite loss raises DivergedTraining") {
  const auto recs = small_corpus(5);
  auto s = prepared(recs, SampleLayout::Temporal);
  s.train[0].targets(0, 0) = std::numeric_limits<double>::infinity();
  require_error(ErrorKind::DivergedTraining, [&] { run_trial(small_config(), ModelKind::Lstm, s.train, s.test, 0); });
}

TEST_CASE("checkpoint round-trip and corruption") {
  auto cfg = default_model_config(ModelKind::GcnLstm);
  cfg.hidden = 5;
  cfg.stacked = true;
  const auto p = initialize_parameters(cfg, 4);
  const auto bytes = encode_checkpoint(p);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FRCK");
  const auto back = decode_checkpoint(bytes);
  CHECK(back.config == p.config);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(parameter_hash(back) == parameter_hash(p));
  auto changed = p;
  changed.head.b2(0, 1) = 1e-300;
  CHECK(parameter_hash(changed) != parameter_hash(p));

  TempDir dir("ckpt");
  save_checkpoint(dir / "m.ckpt", p);
  CHECK(encode_checkpoint(load_checkpoint(dir / "m.ckpt")) == bytes);

  auto bad = bytes;
  bad[1] = 'X';
  require_error(ErrorKind::Format, [&] { decode_checkpoint(bad); });
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  require_error(ErrorKind::Format, [&] { decode_checkpoint(cut); });
}

TEST_CASE("experiment writes reproducible reports") {
  const auto recs = small_corpus(6);
  TempDir a("exp_a"), b("exp_b");
  auto cfg = small_config();
  cfg.models = {ModelKind::GcnLstm, ModelKind::Gcn, ModelKind::Lstm};
  cfg.output_dir = a.path();
  const auto report = run_experiment(cfg, recs);
  cfg.output_dir = b.path();
  run_experiment(cfg, recs);

  CHECK(report.all_ok());
  CHECK(report.target_years == std::vector<int>{2007, 2008, 2009, 2010, 2011});
  for (const char* m : {"gcn_lstm", "gcn", "lstm", "persistence"}) {
    const auto* s = report.find(m);
    REQUIRE(s != nullptr);
    CHECK(s->completed() == 2);
    std::vector<double> totals;
    for (const auto& t : s->trials) totals.push_back(t.total_rmse);
    CHECK(s->total.mean == mean_and_sample_std(totals).mean);
    CHECK(s->total.std == mean_and_sample_std(totals).std);
  }
  for (const char* f : {"table.csv", "report.json", "config.txt", "gcn/trial_0.json", "gcn_lstm/trial_1.ckpt",
                        "lstm/trial_1_predictions.csv"}) {
    INFO(f);
    CHECK(std::filesystem::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto table = slurp(a / "table.csv");
  CHECK(table.rfind("model,2007,2008,2009,2010,2011,Total\n", 0) == 0);
  CHECK(table.find("persistence,") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(a / "report.json"));
  CHECK(j["models"].size() == 4);
  CHECK(j["provenance"]["dataset_hash"].get<std::string>().size() == 16);

  // predictions CSV holds one row per test node and year (6 records: 2 test)
  const auto csv = slurp(a / "gcn_lstm/trial_0_predictions.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * kColumns * 5);

  // the saved checkpoint reproduces the reported test RMSE
  const auto ckpt = load_checkpoint(a / "gcn_lstm/trial_0.ckpt");
  const auto plans = make_splits(std::span<const ThicknessRecord>(recs), cfg.seed, cfg.trials);
  const auto g = build_graph_dataset(recs, plans[0], SampleLayout::Temporal, "train");
  const auto test = prepare_samples(g, Partition::Test, true);
  std::vector<Matrix> targets;
  for (const auto& s : test) targets.push_back(s.targets);
  CHECK(evaluate_rmse(predict_all(ckpt, test), targets).total ==
        doctest::Approx(report.find("gcn_lstm")->trials[0].total_rmse).epsilon(1e-12));
}

TEST_CASE("graph-file training uses the file's partitions and years") {
  const auto recs = small_corpus(5);
  const auto plans = make_splits(std::span<const ThicknessRecord>(recs), 2);
  const auto g = build_graph_dataset(recs, plans[0], SampleLayout::Temporal, "train");
  auto cfg = small_config();
  cfg.models = {ModelKind::Lstm};
  const auto r = run_graph_trial(cfg, g);
  CHECK(r.models.size() == 1);
  CHECK(r.target_years == g.target_years);
  cfg.models = {ModelKind::Gcn};
  require_error(ErrorKind::ShapeMismatch, [&] { run_graph_trial(cfg, g); });
  cfg.models = {ModelKind::Gcn, ModelKind::Lstm};
  require_error(ErrorKind::Config, [&] { run_graph_trial(cfg, g); });
}

TEST_CASE("report renders per-year curves") {
  TempDir dir("report");
  const auto recs = small_corpus(5);
  auto cfg = small_config();
  cfg.models = {ModelKind::Lstm};
  cfg.trials = 1;
  cfg.output_dir = dir.path();
  run_experiment(cfg, recs);
  const auto written = render_trial_report(dir / "lstm/trial_0.json", dir / "plots");
  CHECK(written.size() == 10);
  for (int y = 2007; y <= 2011; ++y) {
    CHECK(std::filesystem::exists(dir / ("plots/trial_0_" + std::to_string(y) + ".svg")));
    const auto csv = slurp(dir / ("plots/trial_0_" + std::to_string(y) + ".csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + kColumns);
  }
  const auto curves = load_curves(dir / "lstm/trial_0_predictions.csv", 1);
  REQUIRE(curves.size() == 5);
  CHECK(curves[0].year == 2007);
  CHECK(curves[0].truth.size() == static_cast<std::size_t>(kColumns));
  const auto svg = curve_svg(curves[0], "2007");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  // shuffling keeps truth/prediction pairs together
  const auto again = load_curves(dir / "lstm/trial_0_predictions.csv", 2);
  double sum_a = 0, sum_b = 0;
  for (std::size_t i = 0; i < curves[3].truth.size(); ++i) {
    sum_a += curves[3].truth[i] * curves[3].prediction[i];
    sum_b += again[3].truth[i] * again[3].prediction[i];
  }
  CHECK(sum_a == doctest::Approx(sum_b).epsilon(1e-12));
}
