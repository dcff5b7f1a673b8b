#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "firn/ingest.hpp"
#include "firn/synth.hpp"
#include "support/helpers.hpp"

using namespace firn;
using firn::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Run firn_cli(const std::string& args) {
  const std::string cmd = std::string(FIRN_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("version and usage errors") {
  const auto v = firn_cli("--version");
  CHECK(v.code == 0);
  CHECK(v.output.find("firn 1.0.0") != std::string::npos);
  CHECK(v.output.find("graph format 1") != std::string::npos);

  const auto no_config = firn_cli("train");
  CHECK(no_config.code == 1);
  CHECK(no_config.output.find("--config") != std::string::npos);
  CHECK(no_config.output.find("Usage") != std::string::npos);

  CHECK(firn_cli("").code == 1);
  CHECK(firn_cli("frobnicate").code == 1);
  CHECK(firn_cli("synth --params a --out b --colour red").code == 1);
  CHECK(firn_cli("build-graphs --dataset a --split 0 --out b --layout sideways").code == 1);
  CHECK(firn_cli("--help").code == 0);
}

TEST_CASE("missing inputs are validation errors that name the file") {
  TempDir dir("cli_missing");
  const auto r = firn_cli("synth --params " + q(dir / "nope.txt") + " --out " + q(dir / "d.frds"));
  CHECK(r.code == 1);
  CHECK(r.output.find("nope.txt") != std::string::npos);
  write(dir / "bad.txt", "n_segments = 3\nwobble = 2\n");
  const auto bad = firn_cli("synth --params " + q(dir / "bad.txt") + " --out " + q(dir / "d.frds"));
  CHECK(bad.code == 1);
  CHECK(bad.output.find("wobble") != std::string::npos);
}

TEST_CASE("in-process dispatch matches the binary") {
  const char* argv[] = {"firn", "train"};
  CHECK(cli::dispatch(2, const_cast<char**>(argv)) == cli::kExitInvalid);
  CHECK(cli::dispatch(2, const_cast<char**>(argv)) == cli::kExitInvalid);
}

TEST_CASE("full pipeline on a 20-segment synthetic corpus") {
  TempDir dir("cli_pipeline");
  write(dir / "synth.txt", "n_segments = 20\nseed = 4\ntrend = 0.5\n");
  auto r = firn_cli("synth --params " + q(dir / "synth.txt") + " --out " + q(dir / "corpus.frds"));
  REQUIRE(r.code == 0);
  CHECK(r.output.find("seed = 4") != std::string::npos);  // resolved config logged
  const auto corpus_bytes = slurp(dir / "corpus.frds");
  REQUIRE(firn_cli("synth --params " + q(dir / "synth.txt") + " --out " + q(dir / "corpus.frds")).code == 0);
  CHECK(slurp(dir / "corpus.frds") == corpus_bytes);

  r = firn_cli("build-graphs --dataset " + q(dir / "corpus.frds") + " --split 1 --seed 3 --out " + q(dir / "t.frgr"));
  REQUIRE(r.code == 0);
  CHECK(r.output.find("16 train / 4 test") != std::string::npos);
  REQUIRE(firn_cli("build-graphs --dataset " + q(dir / "corpus.frds") +
                   " --split 1 --seed 3 --layout static --norm-scope all --out " + q(dir / "s.frgr"))
              .code == 0);
  CHECK(firn_cli("build-graphs --dataset " + q(dir / "corpus.frds") + " --split 5 --out " + q(dir / "x.frgr")).code == 1);

  write(dir / "train.cfg",
        "model = gcn_lstm, gcn, lstm\nepochs = 1\nhidden = 4\ntrials = 2\nseed = 3\ndataset = corpus.frds\nout = run\n");
  r = firn_cli("train --config " + q(dir / "train.cfg"));
  REQUIRE(r.code == 0);
  CHECK(r.output.find("model,2007,2008,2009,2010,2011,Total") != std::string::npos);
  CHECK(r.output.find("epochs = 1") != std::string::npos);
  for (const char* f : {"run/table.csv", "run/report.json", "run/config.txt", "run/gcn_lstm/trial_1.json",
                        "run/gcn/trial_0.ckpt", "run/lstm/trial_0_predictions.csv"})
    CHECK(std::filesystem::exists(dir / f));
  const auto report_bytes = slurp(dir / "run/report.json");
  REQUIRE(firn_cli("-q train --config " + q(dir / "train.cfg")).code == 0);
  CHECK(slurp(dir / "run/report.json") == report_bytes);

  r = firn_cli("evaluate --checkpoint " + q(dir / "run/gcn_lstm/trial_1.ckpt") + " --graphs " + q(dir / "t.frgr") +
               " --out " + q(dir / "eval"));
  REQUIRE(r.code == 0);
  CHECK(r.output.find("total,") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "eval/evaluation.json"));
  // trial 1 of seed 3 is the split the graph file was built from
  const auto trial = nlohmann::json::parse(slurp(dir / "run/gcn_lstm/trial_1.json"));
  const auto eval = nlohmann::json::parse(slurp(dir / "eval/evaluation.json"));
  CHECK(eval["total_rmse"].get<double>() == doctest::Approx(trial["total_rmse"].get<double>()).epsilon(1e-5));

  r = firn_cli("evaluate --checkpoint " + q(dir / "run/gcn/trial_0.ckpt") + " --graphs " + q(dir / "t.frgr"));
  CHECK(r.code == 1);
  CHECK(r.output.find("12 channels") != std::string::npos);
  CHECK(r.output.find("3 channels") != std::string::npos);

  r = firn_cli("report --trial " + q(dir / "run/gcn_lstm/trial_0.json") + " --out " + q(dir / "plots"));
  REQUIRE(r.code == 0);
  for (int y = 2007; y <= 2011; ++y) CHECK(std::filesystem::exists(dir / ("plots/trial_0_" + std::to_string(y) + ".svg")));

  write(dir / "graph.cfg", "model = gcn\nepochs = 1\nhidden = 4\ngraphs = s.frgr\nout = single\n");
  CHECK(firn_cli("train --config " + q(dir / "graph.cfg")).code == 0);
  CHECK(std::filesystem::exists(dir / "single/gcn/trial_0.ckpt"));
}

TEST_CASE("diverged training exits 2 and keeps a partial report") {
  TempDir dir("cli_diverge");
  write(dir / "synth.txt", "n_segments = 5\n");
  REQUIRE(firn_cli("synth --params " + q(dir / "synth.txt") + " --out " + q(dir / "c.frds")).code == 0);
  write(dir / "train.cfg", "model = lstm\nepochs = 3\nhidden = 4\ntrials = 1\nlr = 1e300\ndataset = c.frds\nout = run\n");
  const auto r = firn_cli("train --config " + q(dir / "train.cfg"));
  CHECK(r.code == 2);
  CHECK(r.output.find("DivergedTraining") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "run/report.json"));
  CHECK(j["models"][0]["completed_trials"] == 0);
  CHECK(j["models"][1]["model"] == "persistence");
}

TEST_CASE("ingest reads masks written from synthetic records") {
  TempDir dir("cli_ingest");
  std::filesystem::create_directories(dir / "masks");
  std::filesystem::create_directories(dir / "geo");
  SynthParams p;
  p.n_segments = 3;
  p.layers = 17;
  p.seed = 8;
  std::vector<SegmentRecord> expect;
  for (const auto& rec : generate_corpus(p)) {
    const auto seg = to_segment_record(rec);
    expect.push_back(seg);
    const int rows = seg.layer_tops.maxCoeff() + 5;
    std::ofstream m(dir / ("masks/" + seg.segment_id + ".pgm"), std::ios::binary);
    m << "P5\n" << kColumns << ' ' << rows << "\n255\n";
    std::vector<unsigned char> px(static_cast<std::size_t>(rows * kColumns), 0);
    for (int t = 0; t < seg.layers(); ++t)
      for (int c = 0; c < kColumns; ++c) px[static_cast<std::size_t>(seg.layer_tops(t, c) * kColumns + c)] = 255;
    m.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    std::ofstream g(dir / ("geo/" + seg.segment_id + ".txt"));
    g.precision(17);
    for (int c = 0; c < kColumns; ++c) g << seg.latitudes[c] << ' ' << seg.longitudes[c] << '\n';
  }
  const auto r = firn_cli("ingest --masks " + q(dir / "masks") + " --geo " + q(dir / "geo") + " --out " +
                          q(dir / "d.frds") + " --min-layers 16");
  REQUIRE(r.code == 0);
  const auto got = load_dataset(dir / "d.frds");
  REQUIRE(got.size() == 3);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);

  CHECK(firn_cli("ingest --masks " + q(dir / "masks") + " --geo " + q(dir / "nowhere") + " --out " + q(dir / "e.frds"))
            .code == 1);
}
