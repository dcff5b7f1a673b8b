#include "commands.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "firn/binary_io.hpp"
#include "firn/checkpoint.hpp"
#include "firn/error.hpp"
#include "firn/graph.hpp"
#include "firn/ingest.hpp"
#include "firn/report.hpp"
#include "firn/synth.hpp"
#include "firn/train.hpp"

namespace firn::cli {

namespace {

struct IngestArgs {
  std::string masks, geo, out;
  int min_layers = kMinLayers;
  int surface_year = 2012;
};

struct SynthArgs {
  std::string params, out;
};

struct BuildGraphsArgs {
  std::string dataset, out, layout = "temporal", norm_scope = "train";
  int split = 0;
  int trials = 5;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int min_layers = kMinLayers;
};

struct EvaluateArgs {
  std::string checkpoint, graphs, out, partition = "test";
};

struct ReportArgs {
  std::string trial, out;
};

int run_ingest(const IngestArgs& a) {
  spdlog::info("ingest: masks={} geo={} out={} min_layers={} surface_year={}", a.masks, a.geo, a.out, a.min_layers,
               a.surface_year);
  const auto summary = ingest_directory(a.masks, a.geo, a.min_layers, a.surface_year);
  save_dataset(a.out, std::span<const SegmentRecord>(summary.accepted));
  spdlog::info("ingest: {} records written, {} below {} layers, {} rejected", summary.accepted.size(),
               summary.filtered_out, a.min_layers, summary.rejected.size());
  return kExitOk;
}

int run_synth(const SynthArgs& a) {
  const auto params = load_synth_params(a.params);
  spdlog::info("synth: resolved parameters\n{}", to_text(params));
  const auto corpus = generate_corpus(params);
  save_dataset(a.out, std::span<const ThicknessRecord>(corpus));
  spdlog::info("synth: {} segments written to {}", corpus.size(), a.out);
  return kExitOk;
}

int run_build_graphs(const BuildGraphsArgs& a) {
  if (a.layout != "temporal" && a.layout != "static")
    throw Error(ErrorKind::Config, "--layout must be 'temporal' or 'static'");
  spdlog::info("build-graphs: dataset={} split={} seed={} trials={} layout={} norm_scope={}", a.dataset, a.split,
               a.seed, a.trials, a.layout, a.norm_scope);
  const auto records = filter_usable(load_thickness_dataset(a.dataset), a.min_layers);
  const auto plans = make_splits(std::span<const ThicknessRecord>(records), a.seed, a.trials, a.train_fraction);
  if (a.split < 0 || a.split >= static_cast<int>(plans.size()))
    throw Error(ErrorKind::Config, "--split must lie in [0, " + std::to_string(plans.size()) + ")");
  const auto& plan = plans[static_cast<std::size_t>(a.split)];
  const auto graphs = build_graph_dataset(records, plan,
                                          a.layout == "static" ? SampleLayout::Static : SampleLayout::Temporal,
                                          a.norm_scope);
  save_graphs(a.out, graphs);
  spdlog::info("build-graphs: {} train / {} test samples, split seed {}, written to {}", plan.train_ids.size(),
               plan.test_ids.size(), plan.seed, a.out);
  return kExitOk;
}

int run_train(const std::string& config_path) {
  const auto config = load_train_config(config_path);
  spdlog::info("train: resolved config\n{}dataset = {}\ngraphs = {}\nout = {}", to_text(config),
               config.dataset.string(), config.graphs.string(), config.output_dir.string());
  if (config.output_dir.empty()) throw Error(ErrorKind::Config, "config needs 'out'");

  ExperimentReport report;
  if (!config.graphs.empty()) {
    report = run_graph_trial(config, load_graphs(config.graphs));
  } else {
    if (config.dataset.empty()) throw Error(ErrorKind::Config, "config needs 'dataset' or 'graphs'");
    const auto records = load_thickness_dataset(config.dataset);
    report = run_experiment(config, records);
  }
  std::cout << table_csv(report);
  if (!report.all_ok()) {
    spdlog::error("train: some trials failed; partial report written to {}", config.output_dir.string());
    return kExitRuntime;
  }
  return kExitOk;
}

int run_evaluate(const EvaluateArgs& a) {
  const auto params = load_checkpoint(a.checkpoint);
  const auto graphs = load_graphs(a.graphs);
  const auto& mc = params.config;
  const int expected_steps = mc.kind == ModelKind::Gcn ? 1 : mc.steps;
  if (graphs.channels() != mc.in_channels || graphs.steps() != expected_steps) {
    throw Error(ErrorKind::ShapeMismatch,
                "checkpoint " + a.checkpoint + " expects " + std::to_string(mc.in_channels) + " channels x " +
                    std::to_string(expected_steps) + " steps, but graphs " + a.graphs + " have " +
                    std::to_string(graphs.channels()) + " channels x " + std::to_string(graphs.steps()) + " steps");
  }
  std::optional<Partition> part;
  if (a.partition == "train") part = Partition::Train;
  else if (a.partition == "test") part = Partition::Test;
  else if (a.partition != "all") throw Error(ErrorKind::Config, "--partition must be train, test or all");

  const bool needs_graph = mc.cheb_order > 1;
  const auto samples = prepare_samples(graphs, part, needs_graph);
  if (samples.empty()) throw Error(ErrorKind::Config, "no samples in partition '" + a.partition + "'");
  const auto hash_before = parameter_hash(params);
  const auto preds = predict_all(params, samples);
  if (parameter_hash(params) != hash_before) throw Error(ErrorKind::Format, "evaluation mutated parameters");

  std::vector<Matrix> targets;
  std::vector<std::string> ids;
  for (const auto& s : samples) {
    targets.push_back(s.targets);
    ids.push_back(s.segment_id);
  }
  const auto rmse = evaluate_rmse(preds, targets);
  const auto& years = graphs.target_years;
  std::cout << "year,rmse\n";
  for (std::size_t y = 0; y < rmse.per_year.size(); ++y) std::cout << years[y] << ',' << rmse.per_year[y] << '\n';
  std::cout << "total," << rmse.total << '\n';
  if (!a.out.empty()) {
    const std::filesystem::path dir(a.out);
    write_file_atomic(dir / "predictions.csv", predictions_csv(ids, preds, targets, years));
    nlohmann::json j;
    j["model"] = to_string(mc.kind);
    j["checkpoint"] = a.checkpoint;
    j["graphs"] = a.graphs;
    j["partition"] = a.partition;
    j["per_year_rmse"] = rmse.per_year;
    j["total_rmse"] = rmse.total;
    j["target_years"] = years;
    j["predictions"] = "predictions.csv";
    write_file_atomic(dir / "evaluation.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

int run_report(const ReportArgs& a) {
  const std::filesystem::path trial(a.trial);
  const auto out = a.out.empty() ? trial.parent_path() : std::filesystem::path(a.out);
  for (const auto& p : render_trial_report(trial, out)) spdlog::info("report: wrote {}", p.string());
  return kExitOk;
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"Graph-convolutional LSTM toolkit for annual firn-layer thickness prediction", "firn"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging (per-epoch losses)");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");
  app.set_version_flag("--version", std::string("firn ") + FIRN_VERSION + " (dataset format " +
                                        std::to_string(kDatasetVersion) + ", graph format " +
                                        std::to_string(kGraphFileVersion) + ", checkpoint format " +
                                        std::to_string(kCheckpointVersion) + ")");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Convert labeled masks and geolocation tables into a dataset file");
  ingest_cmd->add_option("--masks", ingest.masks, "Directory of <id>.pgm / <id>.pbm label masks")->required();
  ingest_cmd->add_option("--geo", ingest.geo, "Directory of <id>.txt / <id>.csv (lat lon) tables")->required();
  ingest_cmd->add_option("--out", ingest.out, "Dataset file to write")->required();
  ingest_cmd->add_option("--min-layers", ingest.min_layers, "Minimum layer lines, surface included");
  ingest_cmd->add_option("--surface-year", ingest.surface_year, "Year of the surface line (flight year)");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset file");
  synth_cmd->add_option("--params", synth.params, "Key-value synth parameter file")->required();
  synth_cmd->add_option("--out", synth.out, "Dataset file to write")->required();

  BuildGraphsArgs graphs;
  auto* graphs_cmd = app.add_subcommand("build-graphs", "Build normalized graph samples for one split");
  graphs_cmd->add_option("--dataset", graphs.dataset, "Dataset file")->required();
  graphs_cmd->add_option("--split", graphs.split, "Split plan (trial) index")->required();
  graphs_cmd->add_option("--out", graphs.out, "Graph file to write")->required();
  graphs_cmd->add_option("--seed", graphs.seed, "Split seed");
  graphs_cmd->add_option("--trials", graphs.trials, "Number of split plans");
  graphs_cmd->add_option("--train-fraction", graphs.train_fraction, "Training fraction");
  graphs_cmd->add_option("--norm-scope", graphs.norm_scope, "Fit normalization on 'train' or 'all'")
      ->check(CLI::IsMember({"train", "all"}));
  graphs_cmd->add_option("--layout", graphs.layout, "'temporal' (ten graphs) or 'static' (one 12-feature graph)")
      ->check(CLI::IsMember({"temporal", "static"}));
  graphs_cmd->add_option("--min-layers", graphs.min_layers, "Minimum layer lines");

  std::string train_config;
  auto* train_cmd = app.add_subcommand("train", "Run the multi-trial training experiment");
  train_cmd->add_option("--config", train_config, "Key-value training config")->required();

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a graph file");
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--graphs", evaluate.graphs, "Graph file")->required();
  eval_cmd->add_option("--partition", evaluate.partition, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  eval_cmd->add_option("--out", evaluate.out, "Directory for predictions.csv and evaluation.json");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Render continuous prediction curves for one trial");
  report_cmd->add_option("--trial", report.trial, "trial_<k>.json written by train")->required();
  report_cmd->add_option("--out", report.out, "Output directory (defaults to the trial's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << failed->help();
    return kExitInvalid;
  }

  spdlog::drop("firn");
  auto logger = spdlog::stderr_color_mt("firn");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (ingest_cmd->parsed()) return run_ingest(ingest);
    if (synth_cmd->parsed()) return run_synth(synth);
    if (graphs_cmd->parsed()) return run_build_graphs(graphs);
    if (train_cmd->parsed()) return run_train(train_config);
    if (eval_cmd->parsed()) return run_evaluate(evaluate);
    if (report_cmd->parsed()) return run_report(report);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.kind() == ErrorKind::DivergedTraining ? kExitRuntime : kExitInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitInvalid;
}

}  // namespace firn::cli
