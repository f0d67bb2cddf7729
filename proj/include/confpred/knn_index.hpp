#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "confpred/embedding_store.hpp"

namespace confpred {

/// 1 - <a, b> for unit vectors, clamped to [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Which training points a neighbor query may draw from.
struct ClassFilter {
  int label = 0;
  bool same = true;

  static ClassFilter equals(int y) { return {y, true}; }
  static ClassFilter not_equals(int y) { return {y, false}; }
  bool admits(int c) const { return same ? c == label : c != label; }
};

struct Neighbor {
  double distance = 0.0;
  // Position of the neighbor's id in the lexicographic order of all training
  // ids; ties on distance are broken by this rank.
  std::uint32_t id_rank = 0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id_rank < b.id_rank;
  }
};

/// Up to k nearest neighbors per class for one query, each list sorted by
/// (distance, id). Any filtered k-NN mean can be answered from it: the k
/// nearest "other class" points are contained in the union of the per-class
/// lists.
class NeighborProfile {
 public:
  NeighborProfile(std::size_t k, std::vector<std::vector<Neighbor>> per_class)
      : k_(k), per_class_(std::move(per_class)) {}

  std::size_t k() const { return k_; }
  std::size_t num_classes() const { return per_class_.size(); }
  const std::vector<Neighbor>& nearest(int c) const { return per_class_.at(static_cast<std::size_t>(c)); }

  /// Number of admitted candidates available (capped at k per class).
  std::size_t candidates(ClassFilter filter) const;

  /// Mean distance over the min(k, available) nearest admitted neighbors,
  /// summed in ascending order. Requires k <= profile k. Throws
  /// ValidationError when no training point passes the filter.
  double mean_distance(ClassFilter filter, std::size_t k) const;

 private:
  std::size_t k_;
  std::vector<std::vector<Neighbor>> per_class_;
};

/// Proper-training-set embeddings grouped by label, searched exhaustively.
class ClassPartitionedIndex {
 public:
  /// Throws ValidationError for an empty set, unlabeled rows, or embeddings
  /// that are not unit norm.
  static ClassPartitionedIndex build(const EmbeddingSet& train);

  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return partitions_.size(); }
  std::size_t size() const { return total_; }
  std::size_t class_count(int c) const { return partitions_.at(static_cast<std::size_t>(c)).ids.size(); }
  std::vector<std::size_t> class_counts() const;

  /// Training ids of class c, in training-set order.
  const std::vector<std::string>& class_ids(int c) const { return partitions_.at(static_cast<std::size_t>(c)).ids; }
  std::span<const double> point(int c, std::size_t i) const;

  bool contains_id(std::string_view id) const;

  /// FNV-1a over the sorted training ids.
  std::uint64_t ids_digest() const { return ids_digest_; }

  /// Exact per-class k-NN lists for query u. If `self_id` names a training
  /// point, that point is left out of every list.
  NeighborProfile profile(std::span<const double> u, std::size_t k,
                          std::optional<std::string_view> self_id = std::nullopt) const;

  /// Mean cosine distance from u to its k nearest training points admitted by
  /// `filter` (all of them when fewer than k exist).
  double avg_knn_dist(std::span<const double> u, ClassFilter filter, std::size_t k,
                      std::optional<std::string_view> self_id = std::nullopt) const;

 private:
  struct Partition {
    std::vector<std::string> ids;
    std::vector<std::uint32_t> id_ranks;
    std::vector<double> points;  // row-major, ids.size() x dim_
  };

  std::size_t dim_ = 0;
  std::size_t total_ = 0;
  std::uint64_t ids_digest_ = 0;
  std::vector<Partition> partitions_;
  std::unordered_map<std::string, std::pair<int, std::size_t>> locate_;
};

}  // namespace confpred
