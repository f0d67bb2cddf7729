#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "confpred/conformal.hpp"
#include "confpred/embedding_store.hpp"
#include "confpred/io.hpp"
#include "confpred/metrics.hpp"

namespace confpred {

/// Synthetic exchangeable data: C unit-norm class means with pairwise
/// Euclidean distance at least `separation`; each example is
/// normalize(mean + N(0, spread^2 I)).
struct GeneratorConfig {
  std::size_t num_classes = 5;
  std::size_t dim = 64;
  std::size_t n_train = 5000;
  std::size_t n_cal = 1000;
  std::size_t n_test = 500;
  double separation = 1.0;
  double spread = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Test-set perturbations. The neutral configuration (all defaults) leaves
/// the data untouched.
struct ShiftConfig {
  std::string id = "none";
  double mean_shift = 0.0;
  double scale = 1.0;
  double mixup_rate = 0.0;
  double mixup_concentration = 1.0;
  double cutmix_rate = 0.0;
  double block_fraction = 0.5;
  std::uint64_t seed = 0;
  // Overrides the Beta draw for the mixup coefficient.
  std::optional<double> fixed_lambda;

  void validate() const;
  bool is_neutral() const;
};

/// Unit class-mean directions; rejection-sampled, gives up after 1000 draws.
std::vector<Embedding> draw_class_means(const GeneratorConfig& config);

DataSplit generate(const GeneratorConfig& config);

/// Perturbs the test set only; train and calibration are passed through.
///
/// Applied in order:
///  1. scale: u <- c_y + scale * (u - c_y), c_y the test-set centroid of class y
///  2. mean shift: u <- u + mean_shift * w, w a fixed random unit direction
///  3. mixup: a `mixup_rate` fraction of rows become lambda*a + (1-lambda)*b
///     for a random partner b, lambda ~ Beta(c, c); label of the heavier parent
///  4. cutmix: a disjoint `cutmix_rate` fraction get a contiguous block of
///     round(block_fraction * d) coordinates from a random partner; label of
///     the parent contributing most coordinates
/// Mixing parents are taken from the output of step 2. Every modified row is
/// renormalized; untouched rows keep their exact bits.
DataSplit apply_shift(const DataSplit& split, const ShiftConfig& shift);

struct ExperimentConfig {
  GeneratorConfig generator;
  std::vector<ShiftConfig> shifts;
  std::size_t k = kDefaultK;
  std::vector<double> grid = default_grid();
  std::size_t n_seeds = 20;
  double report_epsilon = 0.1;

  void validate() const;
};

/// Reads `generator.*`, `experiment.*` and `shift.<id>.*` keys.
ExperimentConfig experiment_config_from(const KeyValueFile& file);

struct ExperimentRow {
  std::string shift_id;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double coverage = 0.0;
  double avg_set_size = 0.0;
  double correct_efficiency = 0.0;
};

struct AggregateRow {
  std::string shift_id;
  double epsilon = 0.0;
  std::size_t n = 0;
  double coverage_mean = 0.0, coverage_sd = 0.0;
  double avg_set_size_mean = 0.0, avg_set_size_sd = 0.0;
  double correct_efficiency_mean = 0.0, correct_efficiency_sd = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;  // shift-major, then seed, then epsilon
  std::vector<AggregateRow> aggregate;
};

/// Seed s uses generator seed `generator.seed + s` and shift seed
/// `shift.seed + s`; every shift at a given s sees the same generated data,
/// index and calibration table.
ExperimentResult run_validity_experiment(const ExperimentConfig& config);

/// Mean and sample standard deviation per (shift, epsilon); sd is 0 for n=1.
std::vector<AggregateRow> aggregate_rows(const std::vector<ExperimentRow>& rows);

std::string experiment_rows_to_csv(const std::vector<ExperimentRow>& rows, const Provenance* provenance = nullptr);
/// Omits the `_sd` columns when `with_sd` is false.
std::string aggregate_to_csv(const std::vector<AggregateRow>& rows, bool with_sd,
                             const Provenance* provenance = nullptr);

}  // namespace confpred
