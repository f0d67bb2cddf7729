#include "confpred/conformal.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/uniform_01.hpp>

#include "confpred/error.hpp"
#include "confpred/rng.hpp"

namespace confpred {

double nonconformity_ratio(double same_class, double other_class) {
  if (other_class == 0.0) return same_class == 0.0 ? 1.0 : kMaxScore;
  return same_class / other_class;
}

double nonconformity(std::span<const double> u, int y, const ClassPartitionedIndex& index, std::size_t k,
                     std::optional<std::string_view> self_id) {
  if (y < 0 || static_cast<std::size_t>(y) >= index.num_classes()) {
    throw ValidationError("class " + std::to_string(y) + " outside the index label range");
  }
  const auto profile = index.profile(u, k, self_id);
  return nonconformity_ratio(profile.mean_distance(ClassFilter::equals(y), k),
                             profile.mean_distance(ClassFilter::not_equals(y), k));
}

std::string index_fingerprint(const ClassPartitionedIndex& index, std::size_t k) {
  Fnv1a hash;
  hash.update_u64(index.ids_digest());
  hash.update_u64(static_cast<std::uint64_t>(k));
  return to_hex(hash.digest());
}

CalibrationTable::CalibrationTable(std::vector<double> scores, std::size_t k, std::string fingerprint)
    : scores_(std::move(scores)), k_(k), fingerprint_(std::move(fingerprint)) {
  if (scores_.empty()) throw ValidationError("calibration table needs at least one score");
  for (double s : scores_) {
    if (std::isnan(s) || s < 0.0) throw ValidationError("calibration scores must be nonnegative");
  }
  std::sort(scores_.begin(), scores_.end());
}

std::size_t CalibrationTable::count_at_least(double alpha) const {
  return static_cast<std::size_t>(scores_.end() - std::lower_bound(scores_.begin(), scores_.end(), alpha));
}

std::size_t CalibrationTable::count_equal(double alpha) const {
  const auto [lo, hi] = std::equal_range(scores_.begin(), scores_.end(), alpha);
  return static_cast<std::size_t>(hi - lo);
}

void CalibrationTable::check_compatible(const ClassPartitionedIndex& index, std::size_t k) const {
  if (k != k_) {
    throw ValidationError("calibration table was built with k=" + std::to_string(k_) + ", not k=" +
                          std::to_string(k));
  }
  const auto expected = index_fingerprint(index, k);
  if (expected != fingerprint_) {
    throw ValidationError("calibration table fingerprint " + fingerprint_ +
                          " does not match the training index (" + expected + ")");
  }
}

CalibrationTable calibrate(const EmbeddingSet& cal, const ClassPartitionedIndex& index, std::size_t k) {
  if (cal.empty()) throw ValidationError("calibration set is empty");
  if (cal.dim() != index.dim()) throw ValidationError("calibration and training dimensions differ");
  std::vector<double> scores;
  scores.reserve(cal.size());
  for (const auto& ex : cal.examples()) {
    if (index.contains_id(ex.id)) {
      throw ValidationError("calibration example " + ex.id + " also appears in the training set");
    }
    if (ex.label == kNoLabel) throw ValidationError("calibration example " + ex.id + " has no label");
    try {
      scores.push_back(nonconformity(ex.embedding, ex.label, index, k));
    } catch (const ValidationError& e) {
      throw ValidationError("calibration example " + ex.id + ": " + e.what());
    }
  }
  return CalibrationTable(std::move(scores), k, index_fingerprint(index, k));
}

std::string calibration_table_to_csv(const CalibrationTable& table, const Provenance* extra) {
  std::string out;
  if (extra) out += extra->comment_block();
  out += "# k=" + std::to_string(table.k()) + "\n";
  out += "# fingerprint=" + table.fingerprint() + "\n";
  out += "# n=" + std::to_string(table.n()) + "\n";
  out += "alpha\n";
  for (double s : table.scores()) out += format_double(s) + "\n";
  return out;
}

CalibrationTable parse_calibration_table(std::string_view text) {
  std::optional<std::size_t> k, n;
  std::optional<std::string> fingerprint;
  bool header = false;
  std::vector<double> scores;
  std::size_t line_no = 0;
  for (std::string_view raw : split_fields(text, '\n')) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line = trim(line.substr(1));
      if (line.rfind("k=", 0) == 0) {
        const auto v = parse_int(line.substr(2), "calibration k");
        if (v < 1) throw ValidationError("calibration table k must be positive");
        k = static_cast<std::size_t>(v);
      } else if (line.rfind("n=", 0) == 0) {
        n = static_cast<std::size_t>(parse_int(line.substr(2), "calibration n"));
      } else if (line.rfind("fingerprint=", 0) == 0) {
        fingerprint = std::string(trim(line.substr(12)));
      }
      continue;
    }
    if (!header) {
      if (line != "alpha") throw ValidationError("calibration table header must be 'alpha'");
      header = true;
      continue;
    }
    scores.push_back(parse_double(line, "calibration score on line " + std::to_string(line_no)));
  }
  if (!header) throw ValidationError("calibration table is missing its header");
  if (!k) throw ValidationError("calibration table is missing '# k='");
  if (!fingerprint) throw ValidationError("calibration table is missing '# fingerprint='");
  if (n && *n != scores.size()) {
    throw ValidationError("calibration table declares n=" + std::to_string(*n) + " but holds " +
                          std::to_string(scores.size()) + " scores");
  }
  return CalibrationTable(std::move(scores), *k, *fingerprint);
}

CalibrationTable load_calibration_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_calibration_table(text);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

PValueMode parse_pvalue_mode(std::string_view text) {
  if (text == "deterministic") return PValueMode::kDeterministic;
  if (text == "randomized") return PValueMode::kRandomized;
  throw ValidationError("unknown p-value mode '" + std::string(text) + "'");
}

std::string_view to_string(PValueMode mode) {
  return mode == PValueMode::kDeterministic ? "deterministic" : "randomized";
}

double p_value(double alpha, const CalibrationTable& table, PValueMode mode, std::uint64_t seed) {
  const double denom = static_cast<double>(table.n() + 1);
  const std::size_t at_least = table.count_at_least(alpha);
  if (mode == PValueMode::kDeterministic) return static_cast<double>(at_least + 1) / denom;

  const std::size_t ties = table.count_equal(alpha);
  const std::size_t greater = at_least - ties;
  Rng rng(mix_seed(seed));
  boost::random::uniform_01<double> unit;
  const double theta = 1.0 - unit(rng);  // (0, 1]
  return (static_cast<double>(greater) + theta * static_cast<double>(ties + 1)) / denom;
}

PValueRow p_value_row(std::span<const double> u, const ClassPartitionedIndex& index,
                      const CalibrationTable& table, std::size_t k, PValueMode mode, std::uint64_t seed,
                      std::optional<std::string_view> self_id) {
  table.check_compatible(index, k);
  const auto profile = index.profile(u, k, self_id);
  const std::size_t classes = index.num_classes();
  PValueRow row;
  row.alpha.resize(classes);
  row.p.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const int y = static_cast<int>(c);
    if (profile.candidates(ClassFilter::equals(y)) == 0) {
      row.alpha[c] = kMaxScore;
    } else {
      row.alpha[c] = nonconformity_ratio(profile.mean_distance(ClassFilter::equals(y), k),
                                         profile.mean_distance(ClassFilter::not_equals(y), k));
    }
    row.p[c] = p_value(row.alpha[c], table, mode, derive_seed(seed, c));
  }
  return row;
}

std::vector<PValueRow> score_examples(const EmbeddingSet& test, const ClassPartitionedIndex& index,
                                      const CalibrationTable& table, std::size_t k, PValueMode mode,
                                      std::uint64_t seed) {
  if (test.dim() != index.dim() && !test.empty()) {
    throw ValidationError("test and training dimensions differ");
  }
  std::vector<PValueRow> rows;
  rows.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& ex = test[i];
    rows.push_back(p_value_row(ex.embedding, index, table, k, mode, derive_seed(seed, i), ex.id));
  }
  return rows;
}

bool PredictionSet::contains(int label) const {
  return std::binary_search(labels.begin(), labels.end(), label);
}

void validate_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ValidationError("epsilon must lie strictly between 0 and 1");
  }
}

PredictionSet prediction_set(std::span<const double> p, double epsilon) {
  validate_epsilon(epsilon);
  PredictionSet set;
  set.epsilon = epsilon;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > epsilon) set.labels.push_back(static_cast<int>(c));
  }
  return set;
}

int top1(std::span<const double> p, std::span<const double> alpha) {
  if (p.empty()) throw ValidationError("top1 of an empty p-value row");
  if (alpha.size() != p.size()) throw ValidationError("top1: p-value and score rows differ in length");
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.size(); ++c) {
    if (p[c] > p[best] || (p[c] == p[best] && alpha[c] < alpha[best])) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace confpred
