#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "confpred/error.hpp"
#include "confpred/metrics.hpp"
#include "json.hpp"
#include "oracle.hpp"

using namespace confpred;

namespace {

PValueRow row_of(std::vector<double> p) {
  PValueRow r;
  r.alpha.assign(p.size(), 0.5);
  r.p = std::move(p);
  return r;
}

// Random rows with p-values on the 1/(n+1) lattice so ties and exact
// threshold hits occur.
std::vector<PValueRow> random_rows(std::mt19937_64& gen, std::size_t rows, std::size_t classes, int n) {
  std::uniform_int_distribution<int> level(1, n + 1);
  std::uniform_int_distribution<int> alpha_level(0, 4);
  std::vector<PValueRow> out;
  for (std::size_t i = 0; i < rows; ++i) {
    PValueRow r;
    for (std::size_t c = 0; c < classes; ++c) {
      r.p.push_back(level(gen) / static_cast<double>(n + 1));
      r.alpha.push_back(alpha_level(gen) / 4.0);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Evaluate, TwoRowExample) {
  const std::vector<PValueRow> rows{row_of({0.05, 0.5, 0.3, 0.02}), row_of({0.6, 0.05, 0.05, 0.05})};
  const std::vector<int> truth{1, 3};
  const auto r = evaluate(rows, truth, 0.1);
  EXPECT_EQ(r.n_test, 2u);
  EXPECT_DOUBLE_EQ(r.coverage, 0.5);
  EXPECT_DOUBLE_EQ(r.avg_set_size, 1.5);
  EXPECT_DOUBLE_EQ(r.correct_efficiency, 0.0);
  EXPECT_DOUBLE_EQ(r.top1_accuracy, 0.5);
}

TEST(Evaluate, FullSets) {
  const std::vector<PValueRow> rows(4, row_of({0.5, 0.6, 0.7}));
  const std::vector<int> truth{0, 1, 2, 0};
  const auto r = evaluate(rows, truth, 0.1);
  EXPECT_EQ(r.coverage, 1.0);
  EXPECT_EQ(r.avg_set_size, 3.0);
  EXPECT_EQ(r.correct_efficiency, 0.0);
}

TEST(Evaluate, PerfectSingletons) {
  const std::vector<PValueRow> rows{row_of({0.9, 0.01}), row_of({0.02, 0.8})};
  const std::vector<int> truth{0, 1};
  const auto r = evaluate(rows, truth, 0.1);
  EXPECT_EQ(r.coverage, 1.0);
  EXPECT_EQ(r.avg_set_size, 1.0);
  EXPECT_EQ(r.correct_efficiency, 1.0);
  EXPECT_EQ(r.top1_accuracy, 1.0);
}

TEST(Evaluate, Errors) {
  const std::vector<PValueRow> rows{row_of({0.5, 0.5})};
  EXPECT_THROW(evaluate(rows, std::vector<int>{0, 1}, 0.1), ValidationError);
  EXPECT_THROW(evaluate(std::vector<PValueRow>{}, std::vector<int>{}, 0.1), ValidationError);
  EXPECT_THROW(evaluate(rows, std::vector<int>{2}, 0.1), ValidationError);
  EXPECT_THROW(evaluate(rows, std::vector<int>{0}, 1.5), ValidationError);
}

TEST(Evaluate, MatchesHandTallyOnTenRows) {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 500; ++trial) {
    const auto rows = random_rows(gen, 10, 2 + gen() % 4, 9);
    std::vector<int> truth;
    std::vector<std::vector<double>> p, a;
    for (const auto& r : rows) {
      truth.push_back(static_cast<int>(gen() % r.p.size()));
      p.push_back(r.p);
      a.push_back(r.alpha);
    }
    const double eps = std::vector<double>{0.05, 0.1, 0.2, 0.3, 0.5}[gen() % 5];
    const auto report = evaluate(rows, truth, eps);
    const auto t = oracle::tally(p, a, truth, eps);
    EXPECT_EQ(report.covered, t.covered);
    EXPECT_EQ(report.total_set_size, t.set_size);
    EXPECT_EQ(report.correct_singletons, t.correct_singletons);
    EXPECT_EQ(report.top1_correct, t.top1_correct);
    EXPECT_EQ(report.coverage, t.covered / 10.0);
    EXPECT_EQ(report.avg_set_size, t.set_size / 10.0);
    EXPECT_EQ(report.correct_efficiency, t.correct_singletons / 10.0);
    EXPECT_EQ(report.top1_accuracy, t.top1_correct / 10.0);
    EXPECT_LE(report.correct_efficiency, report.coverage);
    EXPECT_LE(report.correct_efficiency, report.top1_accuracy);
  }
}

TEST(Evaluate, RowPermutationInvariant) {
  std::mt19937_64 gen(5);
  auto rows = random_rows(gen, 40, 4, 19);
  std::vector<int> truth;
  for (std::size_t i = 0; i < rows.size(); ++i) truth.push_back(static_cast<int>(gen() % 4));
  const auto before = evaluate(rows, truth, 0.1);
  std::vector<std::size_t> perm(rows.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<PValueRow> rows2;
  std::vector<int> truth2;
  for (std::size_t i : perm) {
    rows2.push_back(rows[i]);
    truth2.push_back(truth[i]);
  }
  const auto after = evaluate(rows2, truth2, 0.1);
  EXPECT_EQ(before.coverage, after.coverage);
  EXPECT_EQ(before.avg_set_size, after.avg_set_size);
  EXPECT_EQ(before.correct_efficiency, after.correct_efficiency);
  EXPECT_EQ(before.top1_accuracy, after.top1_accuracy);
}

TEST(Sweep, SingletonGridMatchesEvaluate) {
  std::mt19937_64 gen(6);
  const auto rows = random_rows(gen, 30, 3, 29);
  std::vector<int> truth(30, 1);
  const auto curve = sweep(rows, truth, std::vector<double>{0.1});
  ASSERT_EQ(curve.points.size(), 1u);
  const auto r = evaluate(rows, truth, 0.1);
  EXPECT_EQ(curve.points[0].coverage, r.coverage);
  EXPECT_EQ(curve.points[0].avg_set_size, r.avg_set_size);
  EXPECT_EQ(curve.points[0].correct_efficiency, r.correct_efficiency);
}

TEST(Sweep, MonotoneAlongGrid) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = random_rows(gen, 50, 5, 49);
    std::vector<int> truth;
    for (int i = 0; i < 50; ++i) truth.push_back(static_cast<int>(gen() % 5));
    auto grid = default_grid();
    grid.insert(grid.begin(), 0.001);
    grid.push_back(0.999);
    const auto curve = sweep(rows, truth, grid);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      EXPECT_LE(curve.points[i].coverage, curve.points[i - 1].coverage);
      EXPECT_LE(curve.points[i].avg_set_size, curve.points[i - 1].avg_set_size);
    }
    EXPECT_LE(curve.points.back().coverage, curve.points.front().coverage);
  }
}

TEST(Grid, ParseAndValidate) {
  const auto g = parse_grid("0.01:0.5:0.01");
  EXPECT_EQ(g, default_grid());
  EXPECT_EQ(parse_grid("0.05,0.1,0.2"), (std::vector<double>{0.05, 0.1, 0.2}));
  EXPECT_THROW(parse_grid("0.2,0.1"), ValidationError);
  EXPECT_THROW(parse_grid("0,0.1"), ValidationError);
  EXPECT_THROW(parse_grid("0.1,0.1"), ValidationError);
  EXPECT_THROW(parse_grid("0.1:0.2"), ValidationError);
  EXPECT_THROW(validate_grid(std::vector<double>{}), ValidationError);
}

TEST(MetricsJson, SixFlatFields) {
  MetricsReport r;
  r.epsilon = 0.1;
  r.n_test = 501;
  r.coverage = 0.886;
  const auto j = nlohmann::json::parse(metrics_to_json(r));
  for (const char* key : {"epsilon", "n_test", "coverage", "avg_set_size", "correct_efficiency", "top1_accuracy"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["n_test"].get<int>(), 501);
  EXPECT_EQ(j["coverage"].get<double>(), 0.886);
  const auto text = metrics_to_text(r);
  EXPECT_NE(text.find("0.886"), std::string::npos);
}

TEST(CurveCsv, Header) {
  CoverageCurve c;
  c.points.push_back({0.1, 0.9, 1.2, 0.7});
  EXPECT_EQ(curve_to_csv(c), "epsilon,coverage,avg_set_size,correct_efficiency\n0.1,0.9,1.2,0.7\n");
}
