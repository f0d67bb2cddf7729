// confpred: split conformal prediction over labeled embeddings.
//
// Exit codes: 0 success, 1 I/O failure, 2 validation failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "confpred/conformal.hpp"
#include "confpred/embedding_store.hpp"
#include "confpred/error.hpp"
#include "confpred/io.hpp"
#include "confpred/knn_index.hpp"
#include "confpred/metrics.hpp"
#include "confpred/report.hpp"
#include "confpred/shift_simulator.hpp"

namespace fs = std::filesystem;
using namespace confpred;

namespace {

std::string file_fingerprint(const fs::path& path) {
  Fnv1a hash;
  hash.update(read_file(path));
  return to_hex(hash.digest());
}

EmbeddingSet load_normalized(const fs::path& path, const std::string& format, bool allow_missing_labels = false) {
  LoadOptions options;
  options.allow_missing_labels = allow_missing_labels;
  EmbeddingFormat fmt = format_from_path(path);
  if (format == "csv") fmt = EmbeddingFormat::kCsv;
  else if (format == "jsonl") fmt = EmbeddingFormat::kJsonl;
  else if (!format.empty()) throw ValidationError("unknown --format '" + format + "'");
  return normalize(load_embeddings(path, fmt, options));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

struct SplitArgs {
  std::string input, out, format, group_mode = "auto";
  std::vector<double> fractions{0.80, 0.16, 0.04};
  std::uint64_t seed = 0;
  bool stratified = true;
};

int cmd_split(const SplitArgs& a) {
  if (a.fractions.size() != 3) throw ValidationError("--fractions needs exactly three values");
  const auto set = load_normalized(a.input, a.format);
  SplitSpec spec;
  spec.frac_train = a.fractions[0];
  spec.frac_cal = a.fractions[1];
  spec.frac_test = a.fractions[2];
  spec.seed = a.seed;
  spec.stratified = a.stratified;
  if (a.group_mode == "auto") spec.group_aware = !set.empty() && set.all_grouped();
  else if (a.group_mode == "on") spec.group_aware = true;
  else if (a.group_mode == "off") spec.group_aware = false;
  else throw ValidationError("--groups must be auto, on or off");
  spec.validate();
  const auto parts = split(set, spec);
  save_split(parts, spec, a.out);
  std::cout << "train " << parts.train.size() << ", calibration " << parts.calibration.size() << ", test "
            << parts.test.size() << " -> " << a.out << "\n";
  return 0;
}

struct CalibrateArgs {
  std::string train, cal, out, format;
  std::size_t k = kDefaultK;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto train = load_normalized(a.train, a.format);
  const auto cal = load_normalized(a.cal, a.format);
  const auto index = ClassPartitionedIndex::build(train);
  const auto table = calibrate(cal, index, a.k);
  Provenance prov = tool_provenance();
  prov.add("seed", "0").add("train", file_fingerprint(a.train)).add("cal", file_fingerprint(a.cal));
  write_file_atomic(a.out, calibration_table_to_csv(table, &prov));
  std::cout << table.n() << " calibration scores (k=" << table.k() << ") -> " << a.out << "\n";
  return 0;
}

struct PredictArgs {
  std::string train, table, test, out, format, mode = "deterministic";
  double epsilon = 0.1;
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;
};

int cmd_predict(const PredictArgs& a) {
  validate_epsilon(a.epsilon);
  const auto mode = parse_pvalue_mode(a.mode);
  const auto train = load_normalized(a.train, a.format);
  const auto test = load_normalized(a.test, a.format, true);
  const auto table = load_calibration_table(a.table);
  const std::size_t k = a.k.value_or(table.k());
  const auto index = ClassPartitionedIndex::build(train);
  if (test.num_classes() > index.num_classes()) {
    throw ValidationError("test labels exceed the training label space");
  }
  const auto rows = score_examples(test, index, table, k, mode, a.seed);
  Provenance prov = tool_provenance();
  prov.add("seed", std::to_string(a.seed))
      .add("k", std::to_string(k))
      .add("mode", std::string(to_string(mode)))
      .add("fingerprint", table.fingerprint())
      .add("train", file_fingerprint(a.train))
      .add("test", file_fingerprint(a.test))
      .add("n_cal", std::to_string(table.n()));
  write_file_atomic(a.out, predictions_to_csv(test, rows, a.epsilon, &prov));
  std::cout << rows.size() << " predictions -> " << a.out << "\n";
  return 0;
}

std::vector<int> require_truth(const PredictionsFile& pred, const std::string& path) {
  if (!pred.all_labeled()) throw ValidationError(path + ": every row needs a true label for evaluation");
  return pred.labels;
}

struct EvaluateArgs {
  std::string pred, out;
  double epsilon = 0.1;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto pred = load_predictions(a.pred);
  const auto truth = require_truth(pred, a.pred);
  const auto report = evaluate(pred.rows, truth, a.epsilon);
  const std::vector<std::pair<std::string, std::string>> extra{
      {"tool", std::string(kToolName) + " " + std::string(kToolVersion)},
      {"seed", "0"},
      {"predictions", file_fingerprint(a.pred)}};
  write_file_atomic(a.out, metrics_to_json(report, extra));
  std::cout << metrics_to_text(report);
  return 0;
}

struct SweepArgs {
  std::vector<std::string> preds;
  std::string out, grid;
  double epsilon = 0.1;
};

int cmd_sweep(const SweepArgs& a) {
  validate_epsilon(a.epsilon);
  const auto grid = a.grid.empty() ? default_grid() : parse_grid(a.grid);
  ensure_dir(a.out);
  std::vector<ChartSeries> series;
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& path : a.preds) {
    const auto pred = load_predictions(path);
    const auto truth = require_truth(pred, path);
    const auto curve = sweep(pred.rows, truth, grid);
    const auto report = evaluate(pred.rows, truth, a.epsilon);
    const std::string name = fs::path(path).stem().string();
    const std::string fp = file_fingerprint(path);

    Provenance prov = tool_provenance();
    prov.add("seed", "0").add("predictions", fp);
    write_file_atomic(fs::path(a.out) / (name + "_curve.csv"), curve_to_csv(curve, &prov));
    write_file_atomic(fs::path(a.out) / (name + "_metrics.json"),
                      metrics_to_json(report, {{"tool", std::string(kToolName) + " " + std::string(kToolVersion)},
                                               {"seed", "0"},
                                               {"predictions", fp}}));
    ChartSeries s{name, {}, {}};
    for (const auto& p : curve.points) {
      s.x.push_back(p.epsilon);
      s.y.push_back(p.coverage);
    }
    series.push_back(std::move(s));
    bars.emplace_back(name, report.correct_efficiency);
    std::cout << name << ": coverage " << format_fixed(report.coverage, 3) << " at epsilon "
              << format_fixed(a.epsilon, 3) << "\n";
  }
  if (grid.size() > 1) {
    write_file_atomic(fs::path(a.out) / "coverage.svg", coverage_chart_svg(series, "Marginal coverage"));
    write_file_atomic(fs::path(a.out) / "efficiency.svg",
                      efficiency_chart_svg(bars, "Correct efficiency at epsilon = " + format_fixed(a.epsilon, 3)));
  }
  return 0;
}

struct SimulateArgs {
  std::string config, out, grid;
  std::optional<std::size_t> seeds, k;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  auto file = KeyValueFile::load(a.config);
  if (a.seeds) file.set("experiment.n_seeds", std::to_string(*a.seeds));
  if (a.k) file.set("experiment.k", std::to_string(*a.k));
  if (a.seed) file.set("generator.seed", std::to_string(*a.seed));
  if (!a.grid.empty()) file.set("experiment.grid", a.grid);
  const auto config = experiment_config_from(file);
  const auto result = run_validity_experiment(config);
  ensure_dir(a.out);

  Provenance prov = tool_provenance();
  prov.add("seed", std::to_string(config.generator.seed))
      .add("k", std::to_string(config.k))
      .add("n_seeds", std::to_string(config.n_seeds))
      .add("config", file_fingerprint(a.config));
  write_file_atomic(fs::path(a.out) / "experiment.csv", experiment_rows_to_csv(result.rows, &prov));
  write_file_atomic(fs::path(a.out) / "aggregate.csv",
                    aggregate_to_csv(result.aggregate, config.n_seeds > 1, &prov));

  std::vector<ChartSeries> series;
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& shift : config.shifts) {
    ChartSeries s{shift.id, {}, {}};
    std::optional<double> at_report;
    for (const auto& row : result.aggregate) {
      if (row.shift_id != shift.id) continue;
      s.x.push_back(row.epsilon);
      s.y.push_back(row.coverage_mean);
      if (std::abs(row.epsilon - config.report_epsilon) < 1e-12) at_report = row.correct_efficiency_mean;
    }
    series.push_back(std::move(s));
    if (at_report) bars.emplace_back(shift.id, *at_report);
  }
  if (config.grid.size() > 1) {
    write_file_atomic(fs::path(a.out) / "coverage.svg", coverage_chart_svg(series, "Mean coverage by shift"));
  }
  if (!bars.empty()) {
    write_file_atomic(fs::path(a.out) / "efficiency.svg",
                      efficiency_chart_svg(bars, "Mean correct efficiency at epsilon = " +
                                                     format_fixed(config.report_epsilon, 3)));
  }
  for (const auto& row : result.aggregate) {
    if (std::abs(row.epsilon - config.report_epsilon) < 1e-12) {
      std::cout << row.shift_id << ": mean coverage " << format_fixed(row.coverage_mean, 3) << " at epsilon "
                << format_fixed(row.epsilon, 3) << " over " << row.n << " seeds\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split conformal prediction over labeled embeddings"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  SplitArgs split_args;
  auto* split_cmd = app.add_subcommand("split", "Split an embedding file into train/calibration/test");
  split_cmd->add_option("--input", split_args.input, "Embedding file (.csv or .jsonl)")->required();
  split_cmd->add_option("--fractions", split_args.fractions, "train cal test fractions")->expected(3)->delimiter(',');
  split_cmd->add_option("--seed", split_args.seed);
  split_cmd->add_option("--stratified", split_args.stratified, "Preserve class proportions (default true)");
  split_cmd->add_option("--groups", split_args.group_mode, "Group-aware splitting: auto|on|off");
  split_cmd->add_option("--format", split_args.format, "Input format override: csv|jsonl");
  split_cmd->add_option("--out", split_args.out, "Output directory")->required();

  CalibrateArgs cal_args;
  auto* cal_cmd = app.add_subcommand("calibrate", "Score the calibration set into a calibration table");
  cal_cmd->add_option("--train", cal_args.train)->required();
  cal_cmd->add_option("--cal", cal_args.cal)->required();
  cal_cmd->add_option("--k", cal_args.k)->check(CLI::PositiveNumber);
  cal_cmd->add_option("--format", cal_args.format, "Input format override: csv|jsonl");
  cal_cmd->add_option("--out", cal_args.out, "Calibration table CSV")->required();

  PredictArgs pred_args;
  auto* pred_cmd = app.add_subcommand("predict", "Per-example p-values and prediction sets");
  pred_cmd->add_option("--train", pred_args.train)->required();
  pred_cmd->add_option("--table", pred_args.table, "Calibration table from 'calibrate'")->required();
  pred_cmd->add_option("--test", pred_args.test)->required();
  pred_cmd->add_option("--epsilon", pred_args.epsilon);
  pred_cmd->add_option("--k", pred_args.k, "Must match the table (default: the table's k)");
  pred_cmd->add_option("--mode", pred_args.mode, "deterministic|randomized");
  pred_cmd->add_option("--seed", pred_args.seed);
  pred_cmd->add_option("--format", pred_args.format, "Input format override: csv|jsonl");
  pred_cmd->add_option("--out", pred_args.out, "Predictions CSV")->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics at one significance level");
  eval_cmd->add_option("--pred", eval_args.pred, "Predictions CSV")->required();
  eval_cmd->add_option("--epsilon", eval_args.epsilon);
  eval_cmd->add_option("--out", eval_args.out, "Metrics JSON")->required();

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Coverage curves and charts over an epsilon grid");
  sweep_cmd->add_option("--pred", sweep_args.preds, "Predictions CSV (repeatable, one run each)")->required();
  sweep_cmd->add_option("--grid", sweep_args.grid, "'a,b,c' or 'start:stop:step' (default 0.01:0.5:0.01)");
  sweep_cmd->add_option("--epsilon", sweep_args.epsilon, "Level for the JSON report and bar chart");
  sweep_cmd->add_option("--out", sweep_args.out, "Output directory")->required();

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Synthetic validity experiment under distribution shift");
  sim_cmd->add_option("--config", sim_args.config, "key=value config file")->required();
  sim_cmd->add_option("--seeds", sim_args.seeds, "Overrides experiment.n_seeds");
  sim_cmd->add_option("--k", sim_args.k, "Overrides experiment.k");
  sim_cmd->add_option("--seed", sim_args.seed, "Overrides generator.seed");
  sim_cmd->add_option("--grid", sim_args.grid, "Overrides experiment.grid");
  sim_cmd->add_option("--out", sim_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*split_cmd) return cmd_split(split_args);
    if (*cal_cmd) return cmd_calibrate(cal_args);
    if (*pred_cmd) return cmd_predict(pred_args);
    if (*eval_cmd) return cmd_evaluate(eval_args);
    if (*sweep_cmd) return cmd_sweep(sweep_args);
    if (*sim_cmd) return cmd_simulate(sim_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
