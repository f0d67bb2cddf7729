#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace confpred {

using Embedding = std::vector<double>;

/// Label value used for rows whose label column is empty (only accepted when
/// the loader is told labels are optional, e.g. unlabeled test data).
inline constexpr int kNoLabel = -1;

struct LabeledExample {
  std::string id;
  std::optional<std::string> group;
  int label = kNoLabel;
  Embedding embedding;

  bool operator==(const LabeledExample&) const = default;
};

/// A validated collection of examples sharing one dimension and label space.
/// Construct through `make`, which enforces the invariants; the object is
/// treated as immutable afterwards.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  /// Throws ValidationError on duplicate ids, dimension mismatch, non-finite
  /// features, or labels outside [0, num_classes).
  static EmbeddingSet make(std::size_t dim, std::size_t num_classes,
                           std::vector<LabeledExample> examples,
                           bool allow_missing_labels = false);

  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  const std::vector<LabeledExample>& examples() const { return examples_; }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }

  bool all_grouped() const;
  bool has_unlabeled() const;
  std::vector<std::size_t> class_counts() const;

  bool operator==(const EmbeddingSet&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<LabeledExample> examples_;
};

enum class EmbeddingFormat { kCsv, kJsonl };

EmbeddingFormat format_from_path(const std::filesystem::path& path);

struct LoadOptions {
  bool allow_missing_labels = false;
};

/// Parses the embedding CSV / JSONL interchange formats. Lines starting with
/// '#' are comments; a `# C=<n>` comment declares the class count.
EmbeddingSet parse_embeddings(const std::string& text, EmbeddingFormat format,
                              const LoadOptions& options = {});
EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format,
                             const LoadOptions& options = {});
EmbeddingSet load_embeddings(const std::filesystem::path& path,
                             const LoadOptions& options = {});

/// Serializes to the canonical CSV form (declared `# C=` line, header, rows).
/// Feature values use the shortest round-trip representation.
std::string embeddings_to_csv(const EmbeddingSet& set,
                              const std::vector<std::pair<std::string, std::string>>& extra_comments = {});

/// Rescales every embedding to unit L2 norm. Throws ValidationError naming the
/// example when its norm is below 1e-12.
EmbeddingSet normalize(const EmbeddingSet& set);

bool is_normalized(const EmbeddingSet& set, double tolerance = 1e-9);

struct SplitSpec {
  double frac_train = 0.80;
  double frac_cal = 0.16;
  double frac_test = 0.04;
  std::uint64_t seed = 0;
  bool stratified = true;
  bool group_aware = false;

  /// Throws ValidationError for fractions outside [0,1], a sum off by more
  /// than 1e-9, or a zero training fraction.
  void validate() const;
};

struct DataSplit {
  EmbeddingSet train;
  EmbeddingSet calibration;
  EmbeddingSet test;

  bool operator==(const DataSplit&) const = default;
};

/// Deterministic three-way split.
///
/// Split sizes come from largest-remainder apportionment of the fractions.
/// Without grouping, each class is apportioned across the splits by a
/// controlled rounding of `n_class * split_size / n`, so every (class, split)
/// count is within one of its proportional share and the split sizes are hit
/// exactly. With grouping, whole groups are placed largest first (seeded
/// shuffle breaks size ties) into the split furthest below its target count.
DataSplit split(const EmbeddingSet& set, const SplitSpec& spec);

/// Writes train.csv, calibration.csv, test.csv and manifest.txt into `dir`.
void save_split(const DataSplit& split, const SplitSpec& spec, const std::filesystem::path& dir);

}  // namespace confpred
