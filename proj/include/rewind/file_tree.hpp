#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rewind/codec.hpp"
#include "rewind/error.hpp"
#include "rewind/operations.hpp"

namespace rwd {

enum class DirClass { system_app, data };

std::string_view to_string(DirClass c);
DirClass dir_class_from_string(std::string_view text);

// Throws InvalidArgument unless `path` is absolute with no empty, "." or ".."
// components and no trailing slash.
void require_normalized(std::string_view path);

bool path_under(std::string_view path, std::string_view prefix);

class Classification {
 public:
  Classification() = default;
  // Throws InvalidArgument on overlapping or unnormalized prefixes.
  explicit Classification(std::vector<std::pair<std::string, DirClass>> prefixes);

  std::optional<DirClass> classify(std::string_view path) const;
  // Throws ClassificationGap.
  DirClass require(std::string_view path) const;

  const std::vector<std::pair<std::string, DirClass>>& prefixes() const { return prefixes_; }
  bool empty() const { return prefixes_.empty(); }

  json to_json() const;
  static Classification from_json(const json& j);
  static Classification defaults();

  bool operator==(const Classification&) const = default;

 private:
  std::vector<std::pair<std::string, DirClass>> prefixes_;
};

struct FileTree {
  std::string root = "/";
  std::map<std::string, std::string> entries;
  Classification classification;

  bool operator==(const FileTree&) const = default;

  std::optional<std::string> content(const std::string& path) const;
  // sha256 over the sorted (path, content hash) listing.
  std::string hash() const;

  json to_json() const;
  static FileTree from_json(const json& j);
};

// Authoritative copy of system/application files.
struct Baseline {
  std::map<std::string, std::string> entries;

  json to_json() const;
  static Baseline from_json(const json& j);
};

Baseline make_baseline(const FileTree& tree);

// Writes past EOF zero-fill the gap. Throws MissingFile for write/rename of an
// absent path; delete of an absent path is a diagnostic no-op.
void apply_file_op_in_place(FileTree& tree, const FileOperation& op, Diagnostics* diags = nullptr);
FileTree apply_file_op(FileTree tree, const FileOperation& op, Diagnostics* diags = nullptr);

// Overlays `data` at `offset`, zero-filling any gap.
void write_at(std::string& content, std::int64_t offset, std::string_view data);

// Throws NotSystemPath.
void baseline_restore_in_place(FileTree& tree, const std::string& path, const Baseline& baseline);
FileTree baseline_restore(FileTree tree, const std::string& path, const Baseline& baseline);

}  // namespace rwd
