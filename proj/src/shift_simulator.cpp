#include "confpred/shift_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include "confpred/error.hpp"
#include "confpred/knn_index.hpp"
#include "confpred/rng.hpp"

namespace confpred {

namespace {

bool normalize_in_place(Embedding& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm >= 1e-12)) return false;
  for (double& x : v) x /= norm;
  return true;
}

Embedding random_unit(std::size_t dim, Rng& rng) {
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  Embedding v(dim);
  do {
    for (double& x : v) x = normal(rng);
  } while (!normalize_in_place(v));
  return v;
}

double euclidean(const Embedding& a, const Embedding& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

EmbeddingSet draw_examples(const GeneratorConfig& config, const std::vector<Embedding>& means,
                           std::size_t count, const std::string& prefix, std::uint64_t stream) {
  Rng rng(derive_seed(config.seed, stream));
  boost::random::normal_distribution<double> normal(0.0, config.spread);
  const int width = static_cast<int>(std::to_string(count).size());
  std::vector<LabeledExample> examples;
  examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LabeledExample ex;
    std::string num = std::to_string(i);
    ex.id = prefix + "-" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    ex.label = static_cast<int>(i % config.num_classes);
    ex.embedding = means[static_cast<std::size_t>(ex.label)];
    for (double& x : ex.embedding) x += normal(rng);
    if (!normalize_in_place(ex.embedding)) ex.embedding = means[static_cast<std::size_t>(ex.label)];
    examples.push_back(std::move(ex));
  }
  return EmbeddingSet::make(config.dim, config.num_classes, std::move(examples));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_classes < 2) throw ValidationError("generator needs at least 2 classes");
  if (dim < 2) throw ValidationError("generator dimension must be at least 2");
  if (n_train < num_classes || n_cal < num_classes || n_test < num_classes) {
    throw ValidationError("generator split counts must each be at least the class count");
  }
  if (!(separation > 0.0)) throw ValidationError("generator separation must be positive");
  if (!(spread > 0.0)) throw ValidationError("generator spread must be positive");
}

void ShiftConfig::validate() const {
  if (!(mean_shift >= 0.0)) throw ValidationError("shift " + id + ": mean_shift must be >= 0");
  if (!(scale > 0.0)) throw ValidationError("shift " + id + ": scale must be > 0");
  if (!(mixup_rate >= 0.0 && mixup_rate <= 1.0)) throw ValidationError("shift " + id + ": mixup_rate must be in [0, 1]");
  if (!(cutmix_rate >= 0.0 && cutmix_rate <= 1.0)) throw ValidationError("shift " + id + ": cutmix_rate must be in [0, 1]");
  if (mixup_rate + cutmix_rate > 1.0) throw ValidationError("shift " + id + ": mixup_rate + cutmix_rate must be <= 1");
  if (!(mixup_concentration > 0.0)) throw ValidationError("shift " + id + ": mixup_concentration must be > 0");
  if (!(block_fraction > 0.0 && block_fraction < 1.0)) {
    throw ValidationError("shift " + id + ": block_fraction must be in (0, 1)");
  }
  if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0)) {
    throw ValidationError("shift " + id + ": fixed lambda must be in [0, 1]");
  }
}

bool ShiftConfig::is_neutral() const {
  return mean_shift == 0.0 && scale == 1.0 && mixup_rate == 0.0 && cutmix_rate == 0.0;
}

std::vector<Embedding> draw_class_means(const GeneratorConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 1));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Embedding> means;
    for (std::size_t c = 0; c < config.num_classes; ++c) means.push_back(random_unit(config.dim, rng));
    bool ok = true;
    for (std::size_t a = 0; a < means.size() && ok; ++a) {
      for (std::size_t b = a + 1; b < means.size() && ok; ++b) ok = euclidean(means[a], means[b]) >= config.separation;
    }
    if (ok) return means;
  }
  throw ValidationError("could not place " + std::to_string(config.num_classes) +
                        " class means at separation " + format_double(config.separation) +
                        " within 1000 attempts");
}

DataSplit generate(const GeneratorConfig& config) {
  const auto means = draw_class_means(config);
  DataSplit split;
  split.train = draw_examples(config, means, config.n_train, "train", 2);
  split.calibration = draw_examples(config, means, config.n_cal, "cal", 3);
  split.test = draw_examples(config, means, config.n_test, "test", 4);
  return split;
}

DataSplit apply_shift(const DataSplit& split, const ShiftConfig& shift) {
  shift.validate();
  if (shift.is_neutral()) return split;

  const EmbeddingSet& test = split.test;
  const std::size_t n = test.size();
  const std::size_t dim = test.dim();
  std::vector<LabeledExample> rows = test.examples();
  std::vector<bool> touched(n, false);

  if (shift.scale != 1.0) {
    std::vector<Embedding> centroid(test.num_classes(), Embedding(dim, 0.0));
    std::vector<std::size_t> count(test.num_classes(), 0);
    for (const auto& ex : rows) {
      if (ex.label == kNoLabel) continue;
      auto& c = centroid[static_cast<std::size_t>(ex.label)];
      for (std::size_t j = 0; j < dim; ++j) c[j] += ex.embedding[j];
      ++count[static_cast<std::size_t>(ex.label)];
    }
    for (std::size_t c = 0; c < centroid.size(); ++c) {
      if (count[c] == 0) continue;
      for (double& x : centroid[c]) x /= static_cast<double>(count[c]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].label == kNoLabel) continue;
      const auto& c = centroid[static_cast<std::size_t>(rows[i].label)];
      for (std::size_t j = 0; j < dim; ++j) rows[i].embedding[j] = c[j] + shift.scale * (rows[i].embedding[j] - c[j]);
      touched[i] = true;
    }
  }

  if (shift.mean_shift != 0.0) {
    Rng rng(derive_seed(shift.seed, 1));
    const Embedding direction = random_unit(dim, rng);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) rows[i].embedding[j] += shift.mean_shift * direction[j];
      touched[i] = true;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (touched[i] && !normalize_in_place(rows[i].embedding)) rows[i].embedding = test[i].embedding;
  }

  const auto n_mix = static_cast<std::size_t>(std::llround(shift.mixup_rate * static_cast<double>(n)));
  const auto n_cut = std::min(n - n_mix, static_cast<std::size_t>(std::llround(shift.cutmix_rate * static_cast<double>(n))));
  if ((n_mix > 0 || n_cut > 0) && n < 2) throw ValidationError("mixing shifts need at least 2 test examples");

  if (n_mix > 0 || n_cut > 0) {
    Rng rng(derive_seed(shift.seed, 2));
    const std::vector<LabeledExample> parents = rows;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    seeded_shuffle(order, rng);
    const auto partner_of = [&](std::size_t i) {
      std::size_t j = uniform_index(rng, n - 1);
      return j >= i ? j + 1 : j;
    };

    boost::random::beta_distribution<double> beta(shift.mixup_concentration, shift.mixup_concentration);
    for (std::size_t t = 0; t < n_mix; ++t) {
      const std::size_t i = order[t];
      const std::size_t j = partner_of(i);
      const double lambda = shift.fixed_lambda ? *shift.fixed_lambda : beta(rng);
      auto& out = rows[i];
      if (lambda == 1.0) {
        out.embedding = parents[i].embedding;
        out.label = parents[i].label;
        continue;
      }
      if (lambda == 0.0) {
        out.embedding = parents[j].embedding;
        out.label = parents[j].label;
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) {
        out.embedding[d] = lambda * parents[i].embedding[d] + (1.0 - lambda) * parents[j].embedding[d];
      }
      out.label = lambda >= 0.5 ? parents[i].label : parents[j].label;
      if (!normalize_in_place(out.embedding)) out.embedding = parents[i].embedding;
    }

    const std::size_t block = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(shift.block_fraction * static_cast<double>(dim))), 1, dim - 1);
    for (std::size_t t = n_mix; t < n_mix + n_cut; ++t) {
      const std::size_t i = order[t];
      const std::size_t j = partner_of(i);
      const std::size_t start = uniform_index(rng, dim - block + 1);
      auto& out = rows[i];
      out.embedding = parents[i].embedding;
      for (std::size_t d = start; d < start + block; ++d) out.embedding[d] = parents[j].embedding[d];
      out.label = block > dim - block ? parents[j].label : parents[i].label;
      if (!normalize_in_place(out.embedding)) out.embedding = parents[i].embedding;
    }
  }

  DataSplit out{split.train, split.calibration,
                EmbeddingSet::make(dim, test.num_classes(), std::move(rows), test.has_unlabeled())};
  return out;
}

void ExperimentConfig::validate() const {
  generator.validate();
  if (shifts.empty()) throw ValidationError("experiment needs at least one shift condition");
  std::set<std::string> ids;
  for (const auto& s : shifts) {
    s.validate();
    if (!ids.insert(s.id).second) throw ValidationError("duplicate shift id: " + s.id);
  }
  if (k < 1) throw ValidationError("k must be at least 1");
  if (n_seeds < 1) throw ValidationError("n_seeds must be at least 1");
  validate_grid(grid);
  validate_epsilon(report_epsilon);
}

namespace {

std::size_t require_count(const KeyValueFile& file, const std::string& key) {
  const auto v = parse_int(file.require(key), key);
  if (v < 0) throw ValidationError(key + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

}  // namespace

ExperimentConfig experiment_config_from(const KeyValueFile& file) {
  ExperimentConfig config;
  auto& g = config.generator;
  g.num_classes = require_count(file, "generator.C");
  g.dim = require_count(file, "generator.d");
  g.n_train = require_count(file, "generator.n_train");
  g.n_cal = require_count(file, "generator.n_cal");
  g.n_test = require_count(file, "generator.n_test");
  g.separation = parse_double(file.require("generator.separation"), "generator.separation");
  g.spread = parse_double(file.require("generator.spread"), "generator.spread");
  g.seed = parse_uint64(file.require("generator.seed"), "generator.seed");

  config.k = require_count(file, "experiment.k");
  config.n_seeds = require_count(file, "experiment.n_seeds");
  if (file.contains("experiment.grid")) config.grid = parse_grid(file.require("experiment.grid"));
  if (file.contains("experiment.epsilon")) {
    config.report_epsilon = parse_double(file.require("experiment.epsilon"), "experiment.epsilon");
  }

  static const std::set<std::string> known_sections{"generator", "experiment", "shift"};
  static const std::set<std::string> shift_keys{"mean_shift",   "scale",          "mixup_rate",
                                                "mixup_concentration", "cutmix_rate", "block_fraction",
                                                "seed"};
  std::map<std::string, ShiftConfig> shifts;
  std::vector<std::string> first_seen;
  for (const auto& [key, value] : file.values()) {
    const auto parts = split_fields(key, '.');
    if (parts.empty() || known_sections.count(std::string(parts[0])) == 0) {
      throw ValidationError("unknown config key: " + key);
    }
    if (parts[0] != "shift") continue;
    if (parts.size() != 3 || parts[1].empty() || shift_keys.count(std::string(parts[2])) == 0) {
      throw ValidationError("unknown config key: " + key);
    }
    const std::string id(parts[1]);
    auto [it, inserted] = shifts.try_emplace(id);
    if (inserted) {
      it->second.id = id;
      first_seen.push_back(id);
    }
    auto& s = it->second;
    const std::string field(parts[2]);
    if (field == "mean_shift") s.mean_shift = parse_double(value, key);
    else if (field == "scale") s.scale = parse_double(value, key);
    else if (field == "mixup_rate") s.mixup_rate = parse_double(value, key);
    else if (field == "mixup_concentration") s.mixup_concentration = parse_double(value, key);
    else if (field == "cutmix_rate") s.cutmix_rate = parse_double(value, key);
    else if (field == "block_fraction") s.block_fraction = parse_double(value, key);
    else if (field == "seed") s.seed = parse_uint64(value, key);
  }

  std::vector<std::string> order = first_seen;
  if (file.contains("experiment.shifts")) {
    order.clear();
    for (auto id : split_fields(file.require("experiment.shifts"), ',')) {
      const std::string name(trim(id));
      if (shifts.count(name) == 0) {
        ShiftConfig neutral;
        neutral.id = name;
        shifts.emplace(name, neutral);
      }
      order.push_back(name);
    }
  }
  if (order.empty()) {
    ShiftConfig neutral;
    shifts.emplace(neutral.id, neutral);
    order.push_back(neutral.id);
  }
  for (const auto& id : order) config.shifts.push_back(shifts.at(id));
  config.validate();
  return config;
}

ExperimentResult run_validity_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::size_t n_shifts = config.shifts.size();
  std::vector<std::vector<std::vector<ExperimentRow>>> cells(
      n_shifts, std::vector<std::vector<ExperimentRow>>(config.n_seeds));

  for (std::size_t s = 0; s < config.n_seeds; ++s) {
    GeneratorConfig gen = config.generator;
    gen.seed = config.generator.seed + s;
    const DataSplit data = generate(gen);
    const auto index = ClassPartitionedIndex::build(data.train);
    const auto table = calibrate(data.calibration, index, config.k);

    for (std::size_t h = 0; h < n_shifts; ++h) {
      ShiftConfig shift = config.shifts[h];
      shift.seed = config.shifts[h].seed + s;
      const DataSplit shifted = apply_shift(data, shift);
      const auto rows = score_examples(shifted.test, index, table, config.k);
      std::vector<int> truth;
      truth.reserve(shifted.test.size());
      for (const auto& ex : shifted.test.examples()) truth.push_back(ex.label);
      const auto curve = sweep(rows, truth, config.grid);
      auto& out = cells[h][s];
      for (const auto& p : curve.points) {
        out.push_back({shift.id, gen.seed, p.epsilon, p.coverage, p.avg_set_size, p.correct_efficiency});
      }
    }
  }

  ExperimentResult result;
  for (auto& per_shift : cells) {
    for (auto& per_seed : per_shift) {
      result.rows.insert(result.rows.end(), per_seed.begin(), per_seed.end());
    }
  }
  result.aggregate = aggregate_rows(result.rows);
  return result;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<ExperimentRow>& rows) {
  struct Acc {
    std::vector<double> cov, size, eff;
  };
  std::vector<std::pair<std::string, double>> order;
  std::map<std::pair<std::string, double>, Acc> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.shift_id, r.epsilon);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.cov.push_back(r.coverage);
    it->second.size.push_back(r.avg_set_size);
    it->second.eff.push_back(r.correct_efficiency);
  }
  const auto mean_sd = [](const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return std::make_pair(mean, 0.0);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::make_pair(mean, std::sqrt(ss / static_cast<double>(v.size() - 1)));
  };
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& acc = groups.at(key);
    AggregateRow a;
    a.shift_id = key.first;
    a.epsilon = key.second;
    a.n = acc.cov.size();
    std::tie(a.coverage_mean, a.coverage_sd) = mean_sd(acc.cov);
    std::tie(a.avg_set_size_mean, a.avg_set_size_sd) = mean_sd(acc.size);
    std::tie(a.correct_efficiency_mean, a.correct_efficiency_sd) = mean_sd(acc.eff);
    out.push_back(a);
  }
  return out;
}

std::string experiment_rows_to_csv(const std::vector<ExperimentRow>& rows, const Provenance* provenance) {
  std::string out;
  if (provenance) out += provenance->comment_block();
  out += "shift_id,seed,epsilon,coverage,avg_set_size,correct_efficiency\n";
  for (const auto& r : rows) {
    out += r.shift_id + "," + std::to_string(r.seed) + "," + format_double(r.epsilon) + "," +
           format_double(r.coverage) + "," + format_double(r.avg_set_size) + "," +
           format_double(r.correct_efficiency) + "\n";
  }
  return out;
}

std::string aggregate_to_csv(const std::vector<AggregateRow>& rows, bool with_sd, const Provenance* provenance) {
  std::string out;
  if (provenance) out += provenance->comment_block();
  out += "shift_id,epsilon,n,coverage_mean";
  if (with_sd) out += ",coverage_sd";
  out += ",avg_set_size_mean";
  if (with_sd) out += ",avg_set_size_sd";
  out += ",correct_efficiency_mean";
  if (with_sd) out += ",correct_efficiency_sd";
  out += "\n";
  for (const auto& r : rows) {
    out += r.shift_id + "," + format_double(r.epsilon) + "," + std::to_string(r.n) + "," +
           format_double(r.coverage_mean);
    if (with_sd) out += "," + format_double(r.coverage_sd);
    out += "," + format_double(r.avg_set_size_mean);
    if (with_sd) out += "," + format_double(r.avg_set_size_sd);
    out += "," + format_double(r.correct_efficiency_mean);
    if (with_sd) out += "," + format_double(r.correct_efficiency_sd);
    out += "\n";
  }
  return out;
}

}  // namespace confpred
