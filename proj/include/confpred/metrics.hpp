#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "confpred/conformal.hpp"

namespace confpred {

struct MetricsReport {
  double epsilon = 0.0;
  std::size_t n_test = 0;
  double coverage = 0.0;
  double avg_set_size = 0.0;
  double correct_efficiency = 0.0;
  double top1_accuracy = 0.0;

  // Raw tallies behind the ratios.
  std::size_t covered = 0;
  std::size_t total_set_size = 0;
  std::size_t correct_singletons = 0;
  std::size_t top1_correct = 0;
};

/// Coverage, average set size, correct efficiency and top-1 accuracy of the
/// prediction sets at `epsilon`. Throws ValidationError on empty input,
/// length mismatch, or a truth label outside the row's label range.
MetricsReport evaluate(std::span<const PValueRow> rows, std::span<const int> truth, double epsilon);

struct CurvePoint {
  double epsilon = 0.0;
  double coverage = 0.0;
  double avg_set_size = 0.0;
  double correct_efficiency = 0.0;
};

struct CoverageCurve {
  std::vector<CurvePoint> points;
};

/// Throws ValidationError unless the grid is nonempty, strictly increasing
/// and inside (0, 1).
void validate_grid(std::span<const double> grid);

/// 0.01, 0.02, ..., 0.50.
std::vector<double> default_grid();

/// Parses "a,b,c" or "start:stop:step" (inclusive stop).
std::vector<double> parse_grid(const std::string& text);

CoverageCurve sweep(std::span<const PValueRow> rows, std::span<const int> truth,
                    std::span<const double> grid);

/// Flat JSON object; `extra` keys (provenance) are appended after the six
/// metric fields.
std::string metrics_to_json(const MetricsReport& report,
                            const std::vector<std::pair<std::string, std::string>>& extra = {});

/// Human-readable summary, metrics rounded to three decimals.
std::string metrics_to_text(const MetricsReport& report);

std::string curve_to_csv(const CoverageCurve& curve, const Provenance* provenance = nullptr);

}  // namespace confpred
