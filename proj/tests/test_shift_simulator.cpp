#include <gtest/gtest.h>

#include <cmath>

#include "confpred/error.hpp"
#include "confpred/knn_index.hpp"
#include "confpred/shift_simulator.hpp"

using namespace confpred;

namespace {

GeneratorConfig small_config(std::uint64_t seed = 1) {
  GeneratorConfig g;
  g.num_classes = 3;
  g.dim = 16;
  g.n_train = 300;
  g.n_cal = 150;
  g.n_test = 90;
  g.separation = 1.0;
  g.spread = 0.3;
  g.seed = seed;
  return g;
}

double norm_of(const Embedding& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

}  // namespace

TEST(Generate, Deterministic) {
  EXPECT_EQ(generate(small_config(4)), generate(small_config(4)));
  EXPECT_NE(generate(small_config(4)).train, generate(small_config(5)).train);
}

TEST(Generate, BalancedAtAcceptanceScale) {
  GeneratorConfig g;
  g.num_classes = 5;
  g.dim = 64;
  g.n_train = 5000;
  g.n_cal = 1000;
  g.n_test = 500;
  g.seed = 123;
  const auto data = generate(g);
  for (const EmbeddingSet* part : {&data.train, &data.calibration, &data.test}) {
    const auto counts = part->class_counts();
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_TRUE(is_normalized(*part));
  }
  EXPECT_EQ(data.train.size(), 5000u);
  EXPECT_EQ(data.test.size(), 500u);
}

TEST(Generate, MeansRespectSeparation) {
  auto g = small_config();
  g.separation = 1.3;
  const auto means = draw_class_means(g);
  for (std::size_t a = 0; a < means.size(); ++a) {
    EXPECT_NEAR(norm_of(means[a]), 1.0, 1e-12);
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      double sq = 0.0;
      for (std::size_t j = 0; j < g.dim; ++j) sq += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
      EXPECT_GE(std::sqrt(sq), 1.3);
    }
  }
  g.separation = 2.5;  // unreachable on the unit sphere
  EXPECT_THROW(draw_class_means(g), ValidationError);
}

TEST(Generate, CollapsedClustersScoreZero) {
  auto g = small_config();
  g.spread = 1e-12;
  const auto data = generate(g);
  const auto index = ClassPartitionedIndex::build(data.train);
  for (std::size_t k : {1u, 5u, 10u}) {
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& ex = data.test[i];
      EXPECT_LE(nonconformity(ex.embedding, ex.label, index, k), 1e-9);
    }
  }
}

TEST(Generate, Validation) {
  auto g = small_config();
  g.dim = 1;
  EXPECT_THROW(generate(g), ValidationError);
  g = small_config();
  g.n_test = 2;
  EXPECT_THROW(generate(g), ValidationError);
  g = small_config();
  g.spread = 0.0;
  EXPECT_THROW(generate(g), ValidationError);
}

TEST(ApplyShift, NeutralIsIdentity) {
  const auto data = generate(small_config());
  EXPECT_EQ(apply_shift(data, ShiftConfig{}), data);
}

TEST(ApplyShift, OnlyTestChanges) {
  const auto data = generate(small_config());
  ShiftConfig s;
  s.mean_shift = 0.5;
  s.scale = 1.5;
  s.mixup_rate = 0.3;
  s.cutmix_rate = 0.3;
  s.seed = 9;
  const auto shifted = apply_shift(data, s);
  EXPECT_EQ(shifted.train, data.train);
  EXPECT_EQ(shifted.calibration, data.calibration);
  EXPECT_NE(shifted.test, data.test);
  ASSERT_EQ(shifted.test.size(), data.test.size());
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    EXPECT_EQ(shifted.test[i].id, data.test[i].id);
    EXPECT_NEAR(norm_of(shifted.test[i].embedding), 1.0, 1e-12);
  }
  EXPECT_EQ(apply_shift(data, s), shifted);
}

TEST(ApplyShift, MixupWithUnitLambdaKeepsFirstParent) {
  const auto data = generate(small_config());
  ShiftConfig s;
  s.mixup_rate = 1.0;
  s.fixed_lambda = 1.0;
  EXPECT_EQ(apply_shift(data, s).test, data.test);
}

TEST(ApplyShift, MixupLabelsFollowHeavierParent) {
  const auto data = generate(small_config());
  ShiftConfig s;
  s.mixup_rate = 1.0;
  s.fixed_lambda = 0.7;
  const auto shifted = apply_shift(data, s);
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    EXPECT_EQ(shifted.test[i].label, data.test[i].label);
    EXPECT_NE(shifted.test[i].embedding, data.test[i].embedding);
  }
  s.fixed_lambda = 0.0;  // every row becomes its partner
  const auto swapped = apply_shift(data, s);
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    bool found = false;
    for (std::size_t j = 0; j < data.test.size() && !found; ++j) {
      found = j != i && swapped.test[i].embedding == data.test[j].embedding && swapped.test[i].label == data.test[j].label;
    }
    EXPECT_TRUE(found);
  }
}

TEST(ApplyShift, CutmixSwapsOneBlock) {
  const auto data = generate(small_config());
  ShiftConfig s;
  s.cutmix_rate = 0.5;
  s.block_fraction = 0.25;  // 4 of 16 coordinates
  s.seed = 3;
  const auto shifted = apply_shift(data, s);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    if (shifted.test[i].embedding == data.test[i].embedding) continue;
    ++changed;
    EXPECT_EQ(shifted.test[i].label, data.test[i].label);  // majority stays with the base row
  }
  EXPECT_EQ(changed, 45u);
  s.block_fraction = 0.75;
  const auto majority_swap = apply_shift(data, s);
  std::size_t relabeled = 0;
  for (std::size_t i = 0; i < data.test.size(); ++i) relabeled += majority_swap.test[i].label != data.test[i].label;
  EXPECT_GT(relabeled, 0u);
}

TEST(ApplyShift, Validation) {
  const auto data = generate(small_config());
  ShiftConfig s;
  s.mixup_rate = 0.6;
  s.cutmix_rate = 0.6;
  EXPECT_THROW(apply_shift(data, s), ValidationError);
  s = ShiftConfig{};
  s.scale = 0.0;
  EXPECT_THROW(apply_shift(data, s), ValidationError);
  s = ShiftConfig{};
  s.block_fraction = 1.0;
  EXPECT_THROW(apply_shift(data, s), ValidationError);
  s = ShiftConfig{};
  s.mean_shift = -1.0;
  EXPECT_THROW(apply_shift(data, s), ValidationError);
}

TEST(Experiment, RowCountsAndMonotoneCurves) {
  ExperimentConfig cfg;
  cfg.generator = small_config();
  ShiftConfig none, shifted;
  shifted.id = "shifted";
  shifted.mean_shift = 0.5;
  cfg.shifts = {none, shifted};
  cfg.k = 5;
  cfg.grid = {0.05, 0.1, 0.2, 0.4};
  cfg.n_seeds = 3;
  const auto result = run_validity_experiment(cfg);
  EXPECT_EQ(result.rows.size(), 2u * 3u * 4u);
  EXPECT_EQ(result.aggregate.size(), 2u * 4u);
  for (std::size_t i = 0; i < result.rows.size(); i += 4) {
    for (std::size_t j = 1; j < 4; ++j) {
      EXPECT_LE(result.rows[i + j].coverage, result.rows[i + j - 1].coverage);
      EXPECT_LE(result.rows[i + j].avg_set_size, result.rows[i + j - 1].avg_set_size);
    }
  }
  EXPECT_EQ(experiment_rows_to_csv(run_validity_experiment(cfg).rows), experiment_rows_to_csv(result.rows));
}

TEST(Experiment, ExchangeableCurveTracksTarget) {
  ExperimentConfig cfg;
  cfg.generator = small_config(40);
  cfg.generator.n_train = 1500;
  cfg.generator.n_cal = 1000;
  cfg.generator.n_test = 1000;
  cfg.shifts = {ShiftConfig{}};
  cfg.k = 10;
  cfg.n_seeds = 10;
  const auto result = run_validity_experiment(cfg);
  for (const auto& a : result.aggregate) {
    EXPECT_NEAR(a.coverage_mean, 1.0 - a.epsilon, 0.03) << "epsilon " << a.epsilon;
  }
}

TEST(Aggregate, MeanAndSampleSd) {
  std::vector<ExperimentRow> rows{{"a", 0, 0.1, 0.8, 1.0, 0.5}, {"a", 1, 0.1, 0.9, 2.0, 0.7}, {"a", 2, 0.1, 1.0, 3.0, 0.9}};
  const auto agg = aggregate_rows(rows);
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_NEAR(agg[0].coverage_mean, 0.9, 1e-15);
  EXPECT_NEAR(agg[0].coverage_sd, 0.1, 1e-15);
  EXPECT_NEAR(agg[0].avg_set_size_sd, 1.0, 1e-15);
  const auto single = aggregate_rows({rows[0]});
  EXPECT_EQ(single[0].coverage_sd, 0.0);
  const auto csv = aggregate_to_csv(single, false);
  EXPECT_EQ(csv.find("_sd"), std::string::npos);
  EXPECT_NE(aggregate_to_csv(agg, true).find("coverage_sd"), std::string::npos);
}

TEST(ExperimentConfig, ParsesKeyValueFile) {
  const auto file = KeyValueFile::parse(
      "generator.C=4\ngenerator.d=8\ngenerator.n_train=100\ngenerator.n_cal=50\ngenerator.n_test=40\n"
      "generator.separation=1\ngenerator.spread=0.2\ngenerator.seed=7\n"
      "experiment.k=5\nexperiment.n_seeds=2\nexperiment.grid=0.1,0.2\n"
      "shift.zeta.mean_shift=0\nshift.alpha.mean_shift=0.5\nshift.alpha.mixup_rate=0.2\n",
      "test");
  const auto cfg = experiment_config_from(file);
  EXPECT_EQ(cfg.generator.num_classes, 4u);
  EXPECT_EQ(cfg.generator.seed, 7u);
  EXPECT_EQ(cfg.grid, (std::vector<double>{0.1, 0.2}));
  ASSERT_EQ(cfg.shifts.size(), 2u);
  EXPECT_EQ(cfg.shifts[1].id, "zeta");
  EXPECT_EQ(cfg.shifts[0].mixup_rate, 0.2);
}

TEST(ExperimentConfig, MissingKeyIsNamed) {
  const auto file = KeyValueFile::parse("generator.C=4\ngenerator.d=8\n", "test");
  try {
    experiment_config_from(file);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("generator.n_train"), std::string::npos);
  }
  EXPECT_THROW(KeyValueFile::parse("novalue\n", "test"), ValidationError);
}

TEST(Experiment, AcceptanceScaleSeverityOrdering) {
  ExperimentConfig cfg;
  cfg.generator.num_classes = 5;
  cfg.generator.dim = 64;
  cfg.generator.n_train = 5000;
  cfg.generator.n_cal = 1000;
  cfg.generator.n_test = 500;
  cfg.generator.separation = 1.0;
  cfg.generator.spread = 0.3;
  cfg.generator.seed = 1;
  const double s = cfg.generator.separation;
  for (double m : {0.0, s / 4, s / 2, s}) {
    ShiftConfig shift;
    shift.id = "m" + format_double(m);
    shift.mean_shift = m;
    shift.seed = 500;
    cfg.shifts.push_back(shift);
  }
  cfg.k = 10;
  cfg.n_seeds = 20;
  const auto result = run_validity_experiment(cfg);
  const std::size_t per_shift = cfg.grid.size();
  ASSERT_EQ(result.aggregate.size(), 4 * per_shift);

  for (std::size_t g = 0; g < per_shift; ++g) {
    const auto& base = result.aggregate[g];
    EXPECT_GE(base.coverage_mean, 1.0 - base.epsilon - 0.02) << "epsilon " << base.epsilon;
    if (std::abs(base.epsilon - 0.1) < 1e-12) {
      EXPECT_GE(base.coverage_mean, 0.88);
      EXPECT_LE(base.coverage_mean, 0.92);
    }
    for (std::size_t level = 1; level < 4; ++level) {
      const auto& milder = result.aggregate[(level - 1) * per_shift + g];
      const auto& harsher = result.aggregate[level * per_shift + g];
      EXPECT_LE(harsher.coverage_mean, milder.coverage_mean + 0.01) << harsher.shift_id << " at " << harsher.epsilon;
    }
  }
}
