#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace confpred {

inline constexpr std::string_view kToolName = "confpred";
inline constexpr std::string_view kToolVersion = "0.1.0";

/// Shortest decimal representation that parses back to the identical double.
std::string format_double(double value);

/// Fixed-point formatting with `digits` decimals, used for human-facing text.
std::string format_fixed(double value, int digits);

/// Strict parse of a whole field; throws ValidationError naming `what` on failure.
/// Accepts scientific notation and `inf`.
double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);
std::uint64_t parse_uint64(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

std::vector<std::string_view> split_fields(std::string_view line, char sep);
std::string_view trim(std::string_view text);

std::string to_hex(std::uint64_t value);

/// 64-bit FNV-1a, used for input fingerprints.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update_u64(std::uint64_t value);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Ordered `key=value` pairs. Blank lines and lines starting with '#' are ignored.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, std::string_view source);
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  /// Throws ValidationError("missing config key: <key>") when absent.
  const std::string& require(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  void set(const std::string& key, std::string value);
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Provenance comment lines ("# key=value") written at the top of text outputs.
struct Provenance {
  std::vector<std::pair<std::string, std::string>> entries;

  Provenance& add(std::string key, std::string value) {
    entries.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  std::string comment_block(std::string_view prefix = "# ") const;
};

Provenance tool_provenance();

}  // namespace confpred
