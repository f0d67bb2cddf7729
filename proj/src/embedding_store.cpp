#include "confpred/embedding_store.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "confpred/error.hpp"
#include "confpred/io.hpp"
#include "confpred/rng.hpp"
#include "json.hpp"

namespace confpred {

EmbeddingSet EmbeddingSet::make(std::size_t dim, std::size_t num_classes,
                                std::vector<LabeledExample> examples, bool allow_missing_labels) {
  std::unordered_set<std::string> seen;
  seen.reserve(examples.size());
  for (const auto& ex : examples) {
    if (!seen.insert(ex.id).second) throw ValidationError("duplicate id: " + ex.id);
    if (ex.embedding.size() != dim) {
      throw ValidationError("example " + ex.id + " has dimension " +
                            std::to_string(ex.embedding.size()) + ", expected " + std::to_string(dim));
    }
    for (double v : ex.embedding) {
      if (!std::isfinite(v)) throw ValidationError("non-finite feature value in example " + ex.id);
    }
    if (ex.label == kNoLabel && allow_missing_labels) continue;
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= num_classes) {
      throw ValidationError("example " + ex.id + " has label " + std::to_string(ex.label) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  EmbeddingSet set;
  set.dim_ = dim;
  set.num_classes_ = num_classes;
  set.examples_ = std::move(examples);
  return set;
}

bool EmbeddingSet::all_grouped() const {
  return std::all_of(examples_.begin(), examples_.end(),
                     [](const LabeledExample& ex) { return ex.group.has_value(); });
}

bool EmbeddingSet::has_unlabeled() const {
  return std::any_of(examples_.begin(), examples_.end(),
                     [](const LabeledExample& ex) { return ex.label == kNoLabel; });
}

std::vector<std::size_t> EmbeddingSet::class_counts() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (const auto& ex : examples_) {
    if (ex.label != kNoLabel) ++counts[static_cast<std::size_t>(ex.label)];
  }
  return counts;
}

EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return EmbeddingFormat::kJsonl;
  return EmbeddingFormat::kCsv;
}

namespace {

struct RawRows {
  std::optional<std::size_t> declared_classes;
  std::optional<std::size_t> dim;
  std::vector<LabeledExample> examples;
};

// "# C=5" style declarations inside comment lines.
void read_comment(std::string_view line, RawRows& raw) {
  line.remove_prefix(1);
  line = trim(line);
  if (line.rfind("C=", 0) == 0) {
    const auto c = parse_int(line.substr(2), "declared class count");
    if (c < 1) throw ValidationError("declared class count must be positive");
    raw.declared_classes = static_cast<std::size_t>(c);
  }
}

int parse_label(std::string_view field, bool allow_missing, const std::string& where) {
  field = trim(field);
  if (field.empty()) {
    if (allow_missing) return kNoLabel;
    throw ValidationError(where + ": missing label");
  }
  const auto label = parse_int(field, where + " label");
  if (label < 0 || label > std::numeric_limits<int>::max()) {
    throw ValidationError(where + ": label must be a nonnegative integer");
  }
  return static_cast<int>(label);
}

RawRows parse_csv(const std::string& text, const LoadOptions& options) {
  RawRows raw;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t row_no = 0;
  for (std::string_view line : split_fields(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    if (line.front() == '#') {
      read_comment(line, raw);
      continue;
    }
    const auto fields = split_fields(line, ',');
    if (!have_header) {
      if (fields.size() < 3 || trim(fields[0]) != "id" || trim(fields[1]) != "group" ||
          trim(fields[2]) != "label") {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": header must start with id,group,label");
      }
      for (std::size_t j = 3; j < fields.size(); ++j) {
        if (trim(fields[j]) != "f" + std::to_string(j - 3)) {
          throw ValidationError("line " + std::to_string(line_no) + ": expected feature column f" +
                                std::to_string(j - 3));
        }
      }
      raw.dim = fields.size() - 3;
      have_header = true;
      continue;
    }
    ++row_no;
    const std::string where = "row " + std::to_string(row_no) + " (line " + std::to_string(line_no) + ")";
    if (fields.size() != *raw.dim + 3) {
      if (fields.size() < 3) throw ValidationError(where + ": malformed row");
      throw ValidationError(where + ": dimension mismatch, got " + std::to_string(fields.size() - 3) +
                            " features, expected " + std::to_string(*raw.dim));
    }
    LabeledExample ex;
    ex.id = std::string(trim(fields[0]));
    if (ex.id.empty()) throw ValidationError(where + ": empty id");
    const auto group = trim(fields[1]);
    if (!group.empty()) ex.group = std::string(group);
    ex.label = parse_label(fields[2], options.allow_missing_labels, where);
    ex.embedding.reserve(*raw.dim);
    for (std::size_t j = 3; j < fields.size(); ++j) {
      const double v = parse_double(fields[j], where + " feature f" + std::to_string(j - 3));
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite feature value");
      ex.embedding.push_back(v);
    }
    raw.examples.push_back(std::move(ex));
  }
  if (!have_header) throw ValidationError("missing CSV header");
  return raw;
}

RawRows parse_jsonl(const std::string& text, const LoadOptions& options) {
  using nlohmann::json;
  RawRows raw;
  std::size_t line_no = 0;
  std::size_t row_no = 0;
  for (std::string_view line : split_fields(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      read_comment(line, raw);
      continue;
    }
    ++row_no;
    const std::string where = "row " + std::to_string(row_no) + " (line " + std::to_string(line_no) + ")";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": malformed JSON: " + e.what());
    }
    try {
      LabeledExample ex;
      ex.id = obj.at("id").get<std::string>();
      if (ex.id.empty()) throw ValidationError(where + ": empty id");
      if (obj.contains("group") && !obj["group"].is_null()) ex.group = obj["group"].get<std::string>();
      const auto& label = obj.at("label");
      if (label.is_null()) {
        ex.label = parse_label("", options.allow_missing_labels, where);
      } else {
        if (!label.is_number_integer() || label.get<long long>() < 0) {
          throw ValidationError(where + ": label must be a nonnegative integer");
        }
        ex.label = label.get<int>();
      }
      for (const auto& v : obj.at("embedding")) {
        if (!v.is_number()) throw ValidationError(where + ": non-numeric feature value");
        ex.embedding.push_back(v.get<double>());
      }
      if (!raw.dim) raw.dim = ex.embedding.size();
      if (ex.embedding.size() != *raw.dim) {
        throw ValidationError(where + ": dimension mismatch, got " + std::to_string(ex.embedding.size()) +
                              " features, expected " + std::to_string(*raw.dim));
      }
      raw.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw ValidationError(where + ": malformed row: " + e.what());
    }
  }
  return raw;
}

}  // namespace

EmbeddingSet parse_embeddings(const std::string& text, EmbeddingFormat format, const LoadOptions& options) {
  RawRows raw = format == EmbeddingFormat::kCsv ? parse_csv(text, options) : parse_jsonl(text, options);
  std::size_t classes = 0;
  for (const auto& ex : raw.examples) {
    if (ex.label != kNoLabel) classes = std::max(classes, static_cast<std::size_t>(ex.label) + 1);
  }
  if (raw.declared_classes) {
    if (classes > *raw.declared_classes) {
      throw ValidationError("label " + std::to_string(classes - 1) + " exceeds declared class count " +
                            std::to_string(*raw.declared_classes));
    }
    classes = *raw.declared_classes;
  }
  return EmbeddingSet::make(raw.dim.value_or(0), classes, std::move(raw.examples),
                            options.allow_missing_labels);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format,
                             const LoadOptions& options) {
  const std::string text = read_file(path);
  try {
    return parse_embeddings(text, format, options);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, const LoadOptions& options) {
  return load_embeddings(path, format_from_path(path), options);
}

std::string embeddings_to_csv(const EmbeddingSet& set,
                              const std::vector<std::pair<std::string, std::string>>& extra_comments) {
  std::string out;
  for (const auto& [key, value] : extra_comments) out += "# " + key + "=" + value + "\n";
  out += "# C=" + std::to_string(set.num_classes()) + "\n";
  out += "id,group,label";
  for (std::size_t j = 0; j < set.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (const auto& ex : set.examples()) {
    out += ex.id;
    out += ',';
    if (ex.group) out += *ex.group;
    out += ',';
    if (ex.label != kNoLabel) out += std::to_string(ex.label);
    for (double v : ex.embedding) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

EmbeddingSet normalize(const EmbeddingSet& set) {
  std::vector<LabeledExample> examples = set.examples();
  for (auto& ex : examples) {
    double sq = 0.0;
    for (double v : ex.embedding) sq += v * v;
    const double norm = std::sqrt(sq);
    if (!(norm >= 1e-12)) throw ValidationError("zero vector: example " + ex.id + " cannot be normalized");
    for (double& v : ex.embedding) v /= norm;
  }
  return EmbeddingSet::make(set.dim(), set.num_classes(), std::move(examples), set.has_unlabeled());
}

bool is_normalized(const EmbeddingSet& set, double tolerance) {
  for (const auto& ex : set.examples()) {
    double sq = 0.0;
    for (double v : ex.embedding) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > tolerance) return false;
  }
  return true;
}

void SplitSpec::validate() const {
  for (double f : {frac_train, frac_cal, frac_test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("split fractions must lie in [0, 1]");
  }
  if (std::abs(frac_train + frac_cal + frac_test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
  if (frac_train == 0.0) throw ValidationError("training fraction must be positive");
}

namespace {

constexpr std::size_t kSplits = 3;

// Largest-remainder apportionment of n items over the three fractions; ties
// go to the earlier split.
std::array<std::size_t, kSplits> split_targets(std::size_t n, const SplitSpec& spec) {
  const std::array<double, kSplits> frac{spec.frac_train, spec.frac_cal, spec.frac_test};
  std::array<std::size_t, kSplits> target{};
  std::array<double, kSplits> remainder{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < kSplits; ++s) {
    const double exact = frac[s] * static_cast<double>(n);
    target[s] = static_cast<std::size_t>(std::floor(exact));
    remainder[s] = exact - static_cast<double>(target[s]);
    assigned += target[s];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < kSplits; ++s) {
      if (remainder[s] > remainder[best]) best = s;
    }
    ++target[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  while (assigned > n) {  // floating overshoot, only possible for sums a hair above 1
    for (std::size_t s = kSplits; s-- > 0;) {
      if (target[s] > 0) {
        --target[s];
        --assigned;
        break;
      }
    }
  }
  return target;
}

// Rounds the matrix n_c * T_s / N to integers with every cell at its floor or
// ceiling and exact row (class) and column (split) sums. A 0/1 transportation
// problem over the cells with fractional parts; solved as a max flow.
std::vector<std::array<std::size_t, kSplits>> controlled_rounding(
    const std::vector<std::size_t>& class_sizes, const std::array<std::size_t, kSplits>& targets) {
  const std::size_t num_classes = class_sizes.size();
  const std::size_t total = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
  std::vector<std::array<std::size_t, kSplits>> cells(num_classes);
  std::vector<std::array<bool, kSplits>> fractional(num_classes);
  std::vector<std::size_t> row_residual(num_classes);
  std::array<std::size_t, kSplits> col_residual = targets;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t row = 0;
    for (std::size_t s = 0; s < kSplits; ++s) {
      const std::size_t num = class_sizes[c] * targets[s];
      cells[c][s] = num / total;
      fractional[c][s] = num % total != 0;
      row += cells[c][s];
      col_residual[s] -= cells[c][s];
    }
    row_residual[c] = class_sizes[c] - row;
  }

  // Nodes: 0 source, 1..C classes, C+1..C+3 splits, C+4 sink.
  const std::size_t source = 0, sink = num_classes + kSplits + 1, nodes = sink + 1;
  std::vector<std::vector<long>> cap(nodes, std::vector<long>(nodes, 0));
  for (std::size_t c = 0; c < num_classes; ++c) {
    cap[source][1 + c] = static_cast<long>(row_residual[c]);
    for (std::size_t s = 0; s < kSplits; ++s) {
      if (fractional[c][s]) cap[1 + c][1 + num_classes + s] = 1;
    }
  }
  for (std::size_t s = 0; s < kSplits; ++s) cap[1 + num_classes + s][sink] = static_cast<long>(col_residual[s]);

  while (true) {
    std::vector<std::size_t> parent(nodes, nodes);
    parent[source] = source;
    std::queue<std::size_t> frontier;
    frontier.push(source);
    while (!frontier.empty() && parent[sink] == nodes) {
      const std::size_t v = frontier.front();
      frontier.pop();
      for (std::size_t w = 0; w < nodes; ++w) {
        if (parent[w] == nodes && cap[v][w] > 0) {
          parent[w] = v;
          frontier.push(w);
        }
      }
    }
    if (parent[sink] == nodes) break;
    for (std::size_t v = sink; v != source; v = parent[v]) {
      --cap[parent[v]][v];
      ++cap[v][parent[v]];
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (cap[source][1 + c] != 0) throw std::logic_error("controlled rounding did not converge");
    for (std::size_t s = 0; s < kSplits; ++s) {
      if (fractional[c][s] && cap[1 + c][1 + num_classes + s] == 0) ++cells[c][s];
    }
  }
  return cells;
}

// Chooses, for one group, the split it joins. Prefers splits that can take the
// whole group without exceeding their target; among those, in stratified mode,
// the one whose class mix moves closest to proportional. Otherwise the split
// with the largest remaining deficit.
std::size_t choose_group_split(const std::array<long, kSplits>& deficit,
                               const std::vector<std::size_t>& group_classes,
                               const std::vector<std::array<long, kSplits>>& class_in_split,
                               const std::vector<std::array<double, kSplits>>& class_target, long group_size,
                               bool stratified) {
  std::size_t best = 0;
  for (std::size_t s = 1; s < kSplits; ++s) {
    if (deficit[s] > deficit[best]) best = s;
  }
  if (!stratified) return best;
  std::optional<std::size_t> pick;
  double pick_cost = 0.0;
  for (std::size_t s = 0; s < kSplits; ++s) {
    if (deficit[s] < group_size) continue;
    double cost = 0.0;
    for (std::size_t c = 0; c < group_classes.size(); ++c) {
      if (group_classes[c] == 0) continue;
      const double before = static_cast<double>(class_in_split[c][s]) - class_target[c][s];
      const double after = before + static_cast<double>(group_classes[c]);
      cost += after * after - before * before;
    }
    if (!pick || cost < pick_cost || (cost == pick_cost && deficit[s] > deficit[*pick])) {
      pick = s;
      pick_cost = cost;
    }
  }
  return pick.value_or(best);
}

}  // namespace

DataSplit split(const EmbeddingSet& set, const SplitSpec& spec) {
  spec.validate();
  if (set.empty()) throw ValidationError("cannot split an empty set");
  if (set.has_unlabeled()) throw ValidationError("cannot split unlabeled examples");
  const std::size_t n = set.size();
  const auto counts = set.class_counts();
  if (spec.stratified) {
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] == 0) {
        throw ValidationError("class " + std::to_string(c) + " is absent from the input; cannot stratify");
      }
    }
  }
  if (spec.group_aware && !set.all_grouped()) {
    throw ValidationError("group-aware split requires a group on every example");
  }

  Rng rng(derive_seed(spec.seed, 0x5e11));
  const auto targets = split_targets(n, spec);
  std::vector<std::size_t> assignment(n, 0);

  if (spec.group_aware) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = members.try_emplace(*set[i].group);
      if (inserted) order.push_back(*set[i].group);
      it->second.push_back(i);
    }
    seeded_shuffle(order, rng);
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
      return members[a].size() > members[b].size();
    });

    std::array<long, kSplits> deficit{};
    for (std::size_t s = 0; s < kSplits; ++s) deficit[s] = static_cast<long>(targets[s]);
    std::vector<std::array<long, kSplits>> class_in_split(set.num_classes(), std::array<long, kSplits>{});
    std::vector<std::array<double, kSplits>> class_target(set.num_classes());
    for (std::size_t c = 0; c < set.num_classes(); ++c) {
      for (std::size_t s = 0; s < kSplits; ++s) {
        class_target[c][s] = static_cast<double>(counts[c]) * static_cast<double>(targets[s]) /
                             static_cast<double>(n);
      }
    }
    for (const auto& group : order) {
      const auto& idx = members[group];
      std::vector<std::size_t> group_classes(set.num_classes(), 0);
      for (std::size_t i : idx) ++group_classes[static_cast<std::size_t>(set[i].label)];
      const std::size_t s = choose_group_split(deficit, group_classes, class_in_split, class_target,
                                               static_cast<long>(idx.size()), spec.stratified);
      for (std::size_t i : idx) assignment[i] = s;
      deficit[s] -= static_cast<long>(idx.size());
      for (std::size_t c = 0; c < group_classes.size(); ++c) {
        class_in_split[c][s] += static_cast<long>(group_classes[c]);
      }
    }
  } else if (spec.stratified) {
    const auto cells = controlled_rounding(counts, targets);
    for (std::size_t c = 0; c < set.num_classes(); ++c) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(set[i].label) == c) idx.push_back(i);
      }
      seeded_shuffle(idx, rng);
      std::size_t pos = 0;
      for (std::size_t s = 0; s < kSplits; ++s) {
        for (std::size_t j = 0; j < cells[c][s]; ++j) assignment[idx[pos++]] = s;
      }
    }
  } else {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    seeded_shuffle(idx, rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < kSplits; ++s) {
      for (std::size_t j = 0; j < targets[s]; ++j) assignment[idx[pos++]] = s;
    }
  }

  std::array<std::vector<LabeledExample>, kSplits> parts;
  for (std::size_t i = 0; i < n; ++i) parts[assignment[i]].push_back(set[i]);
  DataSplit out;
  out.train = EmbeddingSet::make(set.dim(), set.num_classes(), std::move(parts[0]));
  out.calibration = EmbeddingSet::make(set.dim(), set.num_classes(), std::move(parts[1]));
  out.test = EmbeddingSet::make(set.dim(), set.num_classes(), std::move(parts[2]));
  return out;
}

void save_split(const DataSplit& split, const SplitSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());

  const std::vector<std::pair<std::string, std::string>> comments{
      {"tool", std::string(kToolName) + " " + std::string(kToolVersion)},
      {"seed", std::to_string(spec.seed)}};
  write_file_atomic(dir / "train.csv", embeddings_to_csv(split.train, comments));
  write_file_atomic(dir / "calibration.csv", embeddings_to_csv(split.calibration, comments));
  write_file_atomic(dir / "test.csv", embeddings_to_csv(split.test, comments));

  Provenance manifest = tool_provenance();
  std::string text = manifest.comment_block();
  const std::pair<std::string, std::string> entries[] = {
      {"seed", std::to_string(spec.seed)},
      {"frac_train", format_double(spec.frac_train)},
      {"frac_cal", format_double(spec.frac_cal)},
      {"frac_test", format_double(spec.frac_test)},
      {"n_train", std::to_string(split.train.size())},
      {"n_cal", std::to_string(split.calibration.size())},
      {"n_test", std::to_string(split.test.size())},
      {"d", std::to_string(split.train.dim())},
      {"C", std::to_string(split.train.num_classes())},
      {"group_aware", spec.group_aware ? "true" : "false"},
      {"stratified", spec.stratified ? "true" : "false"},
  };
  for (const auto& [key, value] : entries) text += key + "=" + value + "\n";
  write_file_atomic(dir / "manifest.txt", text);
}

}  // namespace confpred
