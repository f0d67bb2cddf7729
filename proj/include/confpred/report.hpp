#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confpred/conformal.hpp"
#include "confpred/io.hpp"

namespace confpred {

/// Parsed per-example predictions file.
struct PredictionsFile {
  std::vector<std::string> ids;
  std::vector<int> labels;  // kNoLabel when the row carries no truth
  std::vector<PValueRow> rows;

  bool all_labeled() const;
};

/// One row per example: id, label, p0..p{C-1}, alpha0..alpha{C-1}, set, top1.
/// The set column is written as "{a b ...}", "{}" when empty.
std::string predictions_to_csv(const EmbeddingSet& examples, const std::vector<PValueRow>& rows,
                               double epsilon, const Provenance* provenance = nullptr);
PredictionsFile parse_predictions(std::string_view text);
PredictionsFile load_predictions(const std::filesystem::path& path);

std::string format_label_set(const PredictionSet& set);

struct ChartSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Coverage against epsilon, one polyline per series, plus the dashed 1-eps
/// reference line.
std::string coverage_chart_svg(const std::vector<ChartSeries>& series, std::string_view title);

/// One bar per (name, value) pair, values in [0, 1].
std::string efficiency_chart_svg(const std::vector<std::pair<std::string, double>>& bars,
                                 std::string_view title);

}  // namespace confpred
