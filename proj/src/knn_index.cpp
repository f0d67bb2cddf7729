#include "confpred/knn_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "confpred/error.hpp"
#include "confpred/io.hpp"

namespace confpred {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double distance_from_dot(double d) { return std::clamp(1.0 - d, 0.0, 2.0); }

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_distance: dimension mismatch");
  return distance_from_dot(dot(a.data(), b.data(), a.size()));
}

std::size_t NeighborProfile::candidates(ClassFilter filter) const {
  std::size_t total = 0;
  for (std::size_t c = 0; c < per_class_.size(); ++c) {
    if (filter.admits(static_cast<int>(c))) total += per_class_[c].size();
  }
  return total;
}

double NeighborProfile::mean_distance(ClassFilter filter, std::size_t k) const {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (k > k_) throw std::logic_error("NeighborProfile queried with k larger than it was built for");

  std::vector<Neighbor> pool;
  for (std::size_t c = 0; c < per_class_.size(); ++c) {
    if (!filter.admits(static_cast<int>(c))) continue;
    pool.insert(pool.end(), per_class_[c].begin(), per_class_[c].end());
  }
  if (pool.empty()) {
    throw ValidationError(std::string("no training points ") + (filter.same ? "in class " : "outside class ") +
                          std::to_string(filter.label));
  }
  const std::size_t take = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += pool[i].distance;
  return sum / static_cast<double>(take);
}

ClassPartitionedIndex ClassPartitionedIndex::build(const EmbeddingSet& train) {
  if (train.empty()) throw ValidationError("cannot build an index from an empty training set");
  if (train.has_unlabeled()) throw ValidationError("training set contains unlabeled examples");
  if (!is_normalized(train)) throw ValidationError("training embeddings must be unit-normalized");

  ClassPartitionedIndex index;
  index.dim_ = train.dim();
  index.total_ = train.size();
  index.partitions_.resize(train.num_classes());

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return train[a].id < train[b].id; });
  std::vector<std::uint32_t> rank(train.size());
  Fnv1a hash;
  for (std::size_t r = 0; r < order.size(); ++r) {
    rank[order[r]] = static_cast<std::uint32_t>(r);
    hash.update(train[order[r]].id);
    hash.update(std::string_view("\n"));
  }
  index.ids_digest_ = hash.digest();

  index.locate_.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& ex = train[i];
    auto& part = index.partitions_[static_cast<std::size_t>(ex.label)];
    index.locate_.emplace(ex.id, std::make_pair(ex.label, part.ids.size()));
    part.ids.push_back(ex.id);
    part.id_ranks.push_back(rank[i]);
    part.points.insert(part.points.end(), ex.embedding.begin(), ex.embedding.end());
  }
  return index;
}

std::vector<std::size_t> ClassPartitionedIndex::class_counts() const {
  std::vector<std::size_t> counts;
  counts.reserve(partitions_.size());
  for (const auto& p : partitions_) counts.push_back(p.ids.size());
  return counts;
}

std::span<const double> ClassPartitionedIndex::point(int c, std::size_t i) const {
  const auto& part = partitions_.at(static_cast<std::size_t>(c));
  return {part.points.data() + i * dim_, dim_};
}

bool ClassPartitionedIndex::contains_id(std::string_view id) const {
  return locate_.find(std::string(id)) != locate_.end();
}

NeighborProfile ClassPartitionedIndex::profile(std::span<const double> u, std::size_t k,
                                               std::optional<std::string_view> self_id) const {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (u.size() != dim_) {
    throw ValidationError("query has dimension " + std::to_string(u.size()) + ", index has " +
                          std::to_string(dim_));
  }
  int skip_class = -1;
  std::size_t skip_pos = 0;
  if (self_id) {
    if (auto it = locate_.find(std::string(*self_id)); it != locate_.end()) {
      skip_class = it->second.first;
      skip_pos = it->second.second;
    }
  }

  std::vector<std::vector<Neighbor>> per_class(partitions_.size());
  for (std::size_t c = 0; c < partitions_.size(); ++c) {
    const auto& part = partitions_[c];
    // Bounded max-heap on (distance, id rank): the top is the current k-th best.
    auto& heap = per_class[c];
    heap.reserve(std::min(k, part.ids.size()) + 1);
    for (std::size_t i = 0; i < part.ids.size(); ++i) {
      if (static_cast<int>(c) == skip_class && i == skip_pos) continue;
      const Neighbor cand{distance_from_dot(dot(u.data(), part.points.data() + i * dim_, dim_)),
                          part.id_ranks[i]};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::sort_heap(heap.begin(), heap.end());
  }
  return NeighborProfile(k, std::move(per_class));
}

double ClassPartitionedIndex::avg_knn_dist(std::span<const double> u, ClassFilter filter, std::size_t k,
                                           std::optional<std::string_view> self_id) const {
  return profile(u, k, self_id).mean_distance(filter, k);
}

}  // namespace confpred
