#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confpred/embedding_store.hpp"
#include "confpred/io.hpp"
#include "confpred/knn_index.hpp"

namespace confpred {

/// Score assigned when the other-class distance is zero but the same-class
/// distance is not. Compares above every finite score.
inline constexpr double kMaxScore = std::numeric_limits<double>::infinity();

inline constexpr std::size_t kDefaultK = 10;

/// Ratio of same-class to other-class mean k-NN distance with the degenerate
/// conventions: 0/0 -> 1, x/0 -> kMaxScore.
double nonconformity_ratio(double same_class, double other_class);

/// Nonconformity of (u, y) against the index. Throws ValidationError when
/// class y or every other class is empty.
double nonconformity(std::span<const double> u, int y, const ClassPartitionedIndex& index,
                     std::size_t k, std::optional<std::string_view> self_id = std::nullopt);

/// Identifies the (training set, k) pair a calibration table was built from.
std::string index_fingerprint(const ClassPartitionedIndex& index, std::size_t k);

/// Calibration scores sorted ascending, tagged with the k and index
/// fingerprint that produced them.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  /// Sorts the scores. Throws ValidationError when empty or when a score is
  /// NaN or negative.
  CalibrationTable(std::vector<double> scores, std::size_t k, std::string fingerprint);

  const std::vector<double>& scores() const { return scores_; }
  std::size_t n() const { return scores_.size(); }
  std::size_t k() const { return k_; }
  const std::string& fingerprint() const { return fingerprint_; }

  /// Count of scores >= alpha and count of scores == alpha.
  std::size_t count_at_least(double alpha) const;
  std::size_t count_equal(double alpha) const;

  /// Throws ValidationError unless the table was built with this index and k.
  void check_compatible(const ClassPartitionedIndex& index, std::size_t k) const;

  bool operator==(const CalibrationTable&) const = default;

 private:
  std::vector<double> scores_;
  std::size_t k_ = 0;
  std::string fingerprint_;
};

/// Scores every calibration example against its own label. Rejects
/// calibration ids that also appear in the index.
CalibrationTable calibrate(const EmbeddingSet& cal, const ClassPartitionedIndex& index, std::size_t k);

std::string calibration_table_to_csv(const CalibrationTable& table, const Provenance* extra = nullptr);
CalibrationTable parse_calibration_table(std::string_view text);
CalibrationTable load_calibration_table(const std::filesystem::path& path);

enum class PValueMode { kDeterministic, kRandomized };

PValueMode parse_pvalue_mode(std::string_view text);
std::string_view to_string(PValueMode mode);

/// Conformal p-value of a test score.
///
/// Deterministic: (#{alpha_i >= alpha} + 1) / (n + 1).
/// Randomized (smoothed): (#{alpha_i > alpha} + theta * (#{alpha_i == alpha} + 1)) / (n + 1)
/// with theta ~ U(0,1] drawn from `seed`.
double p_value(double alpha, const CalibrationTable& table,
               PValueMode mode = PValueMode::kDeterministic, std::uint64_t seed = 0);

/// Per-class nonconformity scores and p-values for one test example.
struct PValueRow {
  std::vector<double> alpha;
  std::vector<double> p;

  std::size_t num_classes() const { return p.size(); }
  bool operator==(const PValueRow&) const = default;
};

/// Tries every candidate label. A label with no training points gets
/// kMaxScore instead of an error.
PValueRow p_value_row(std::span<const double> u, const ClassPartitionedIndex& index,
                      const CalibrationTable& table, std::size_t k,
                      PValueMode mode = PValueMode::kDeterministic, std::uint64_t seed = 0,
                      std::optional<std::string_view> self_id = std::nullopt);

/// p_value_row for every example of `test`, in order. Randomized mode derives
/// a per-row seed from `seed` and the row position.
std::vector<PValueRow> score_examples(const EmbeddingSet& test, const ClassPartitionedIndex& index,
                                      const CalibrationTable& table, std::size_t k,
                                      PValueMode mode = PValueMode::kDeterministic,
                                      std::uint64_t seed = 0);

struct PredictionSet {
  std::vector<int> labels;  // ascending
  double epsilon = 0.0;

  bool contains(int label) const;
  std::size_t size() const { return labels.size(); }
};

/// {y : p(y) > epsilon}. Empty sets are legal. Throws ValidationError when
/// epsilon is outside (0, 1).
PredictionSet prediction_set(std::span<const double> p, double epsilon);

/// Label with the largest p-value; ties go to the smaller score, then the
/// smaller label.
int top1(std::span<const double> p, std::span<const double> alpha);

void validate_epsilon(double epsilon);

}  // namespace confpred
