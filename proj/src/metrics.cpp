#include "confpred/metrics.hpp"

#include <cmath>

#include "confpred/error.hpp"
#include "json.hpp"

namespace confpred {

MetricsReport evaluate(std::span<const PValueRow> rows, std::span<const int> truth, double epsilon) {
  validate_epsilon(epsilon);
  if (rows.empty()) throw ValidationError("evaluate: no rows");
  if (rows.size() != truth.size()) {
    throw ValidationError("evaluate: " + std::to_string(rows.size()) + " rows but " +
                          std::to_string(truth.size()) + " truth labels");
  }
  MetricsReport r;
  r.epsilon = epsilon;
  r.n_test = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const int y = truth[i];
    if (row.alpha.size() != row.p.size()) throw ValidationError("evaluate: malformed row " + std::to_string(i));
    if (y < 0 || static_cast<std::size_t>(y) >= row.p.size()) {
      throw ValidationError("evaluate: truth label " + std::to_string(y) + " out of range in row " +
                            std::to_string(i));
    }
    const auto set = prediction_set(row.p, epsilon);
    const bool covered = set.contains(y);
    r.covered += covered ? 1 : 0;
    r.total_set_size += set.size();
    r.correct_singletons += (covered && set.size() == 1) ? 1 : 0;
    r.top1_correct += top1(row.p, row.alpha) == y ? 1 : 0;
  }
  const double n = static_cast<double>(r.n_test);
  r.coverage = static_cast<double>(r.covered) / n;
  r.avg_set_size = static_cast<double>(r.total_set_size) / n;
  r.correct_efficiency = static_cast<double>(r.correct_singletons) / n;
  r.top1_accuracy = static_cast<double>(r.top1_correct) / n;
  return r;
}

void validate_grid(std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("epsilon grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw ValidationError("epsilon grid values must lie in (0, 1)");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ValidationError("epsilon grid must be strictly increasing");
  }
}

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 50; ++i) grid.push_back(i / 100.0);
  return grid;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  const auto colon = split_fields(text, ':');
  if (colon.size() == 3) {
    const double start = parse_double(colon[0], "grid start");
    const double stop = parse_double(colon[1], "grid stop");
    const double step = parse_double(colon[2], "grid step");
    if (!(step > 0.0)) throw ValidationError("grid step must be positive");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    if (count < 0 || count > 100000) throw ValidationError("grid range is empty or too large");
    for (long i = 0; i <= count; ++i) {
      grid.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
  } else if (colon.size() == 1) {
    for (auto field : split_fields(text, ',')) grid.push_back(parse_double(field, "grid value"));
  } else {
    throw ValidationError("grid must be 'a,b,c' or 'start:stop:step'");
  }
  validate_grid(grid);
  return grid;
}

CoverageCurve sweep(std::span<const PValueRow> rows, std::span<const int> truth, std::span<const double> grid) {
  validate_grid(grid);
  CoverageCurve curve;
  curve.points.reserve(grid.size());
  for (double eps : grid) {
    const auto r = evaluate(rows, truth, eps);
    curve.points.push_back({eps, r.coverage, r.avg_set_size, r.correct_efficiency});
  }
  return curve;
}

std::string metrics_to_json(const MetricsReport& report,
                            const std::vector<std::pair<std::string, std::string>>& extra) {
  nlohmann::ordered_json j;
  j["epsilon"] = report.epsilon;
  j["n_test"] = report.n_test;
  j["coverage"] = report.coverage;
  j["avg_set_size"] = report.avg_set_size;
  j["correct_efficiency"] = report.correct_efficiency;
  j["top1_accuracy"] = report.top1_accuracy;
  for (const auto& [key, value] : extra) j[key] = value;
  return j.dump(2) + "\n";
}

std::string metrics_to_text(const MetricsReport& report) {
  std::string out;
  out += "epsilon             " + format_fixed(report.epsilon, 3) + "\n";
  out += "n_test              " + std::to_string(report.n_test) + "\n";
  out += "coverage            " + format_fixed(report.coverage, 3) + "\n";
  out += "avg_set_size        " + format_fixed(report.avg_set_size, 3) + "\n";
  out += "correct_efficiency  " + format_fixed(report.correct_efficiency, 3) + "\n";
  out += "top1_accuracy       " + format_fixed(report.top1_accuracy, 3) + "\n";
  return out;
}

std::string curve_to_csv(const CoverageCurve& curve, const Provenance* provenance) {
  std::string out;
  if (provenance) out += provenance->comment_block();
  out += "epsilon,coverage,avg_set_size,correct_efficiency\n";
  for (const auto& p : curve.points) {
    out += format_double(p.epsilon) + "," + format_double(p.coverage) + "," + format_double(p.avg_set_size) +
           "," + format_double(p.correct_efficiency) + "\n";
  }
  return out;
}

}  // namespace confpred
