#include "rewind/file_tree.hpp"

#include <algorithm>

namespace rwd {

std::string_view to_string(DirClass c) { return c == DirClass::system_app ? "system_app" : "data"; }

DirClass dir_class_from_string(std::string_view text) {
  if (text == "system_app") return DirClass::system_app;
  if (text == "data") return DirClass::data;
  throw Error(ErrorCode::InvalidArgument, "unknown directory class '" + std::string(text) + "'");
}

void require_normalized(std::string_view path) {
  auto bad = [&](const char* why) {
    throw Error(ErrorCode::InvalidArgument, "path '" + std::string(path) + "' " + why);
  };
  if (path.empty() || path.front() != '/') bad("is not absolute");
  if (path == "/") return;
  if (path.back() == '/') bad("has a trailing slash");
  std::string_view rest = path.substr(1);
  while (true) {
    auto slash = rest.find('/');
    auto part = rest.substr(0, slash);
    if (part.empty() || part == "." || part == "..") bad("is not normalized");
    if (slash == std::string_view::npos) break;
    rest.remove_prefix(slash + 1);
  }
}

bool path_under(std::string_view path, std::string_view prefix) {
  if (prefix == "/") return true;
  if (!path.starts_with(prefix)) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '/';
}

Classification::Classification(std::vector<std::pair<std::string, DirClass>> prefixes)
    : prefixes_(std::move(prefixes)) {
  for (const auto& [p, _] : prefixes_) require_normalized(p);
  for (std::size_t i = 0; i < prefixes_.size(); ++i) {
    for (std::size_t j = 0; j < prefixes_.size(); ++j) {
      if (i != j && path_under(prefixes_[i].first, prefixes_[j].first)) {
        throw Error(ErrorCode::InvalidArgument,
                    "classification prefixes overlap: " + prefixes_[i].first + " and " + prefixes_[j].first);
      }
    }
  }
  std::sort(prefixes_.begin(), prefixes_.end());
}

std::optional<DirClass> Classification::classify(std::string_view path) const {
  for (const auto& [p, c] : prefixes_) {
    if (path_under(path, p)) return c;
  }
  return std::nullopt;
}

DirClass Classification::require(std::string_view path) const {
  auto c = classify(path);
  if (!c) throw Error(ErrorCode::ClassificationGap, std::string(path));
  return *c;
}

json Classification::to_json() const {
  json arr = json::array();
  for (const auto& [p, c] : prefixes_) arr.push_back({{"prefix", p}, {"class", std::string(to_string(c))}});
  return arr;
}

Classification Classification::from_json(const json& j) {
  std::vector<std::pair<std::string, DirClass>> prefixes;
  for (const auto& item : j) {
    prefixes.emplace_back(item.at("prefix").get<std::string>(),
                          dir_class_from_string(item.at("class").get<std::string>()));
  }
  return Classification(std::move(prefixes));
}

Classification Classification::defaults() {
  return Classification({{"/app", DirClass::system_app},
                         {"/bin", DirClass::system_app},
                         {"/etc", DirClass::system_app},
                         {"/tmp", DirClass::system_app},
                         {"/usr", DirClass::system_app},
                         {"/var/www", DirClass::system_app},
                         {"/data", DirClass::data}});
}

std::optional<std::string> FileTree::content(const std::string& path) const {
  auto it = entries.find(path);
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

std::string FileTree::hash() const {
  std::string listing;
  for (const auto& [path, bytes] : entries) {
    listing += path;
    listing += '\0';
    listing += sha256_hex(bytes);
    listing += '\n';
  }
  return sha256_hex(listing);
}

json FileTree::to_json() const {
  json e = json::object();
  for (const auto& [path, bytes] : entries) e[path] = base64_encode(bytes);
  return {{"root", root}, {"classification", classification.to_json()}, {"entries", e}};
}

FileTree FileTree::from_json(const json& j) {
  FileTree t;
  t.root = j.value("root", std::string("/"));
  if (j.contains("classification")) t.classification = Classification::from_json(j.at("classification"));
  for (const auto& [path, b64] : j.at("entries").items()) {
    require_normalized(path);
    t.entries[path] = base64_decode(b64.get<std::string>());
  }
  return t;
}

json Baseline::to_json() const {
  json e = json::object();
  for (const auto& [path, bytes] : entries) e[path] = base64_encode(bytes);
  return {{"entries", e}};
}

Baseline Baseline::from_json(const json& j) {
  Baseline b;
  for (const auto& [path, b64] : j.at("entries").items()) b.entries[path] = base64_decode(b64.get<std::string>());
  return b;
}

Baseline make_baseline(const FileTree& tree) {
  Baseline b;
  for (const auto& [path, bytes] : tree.entries) {
    if (tree.classification.classify(path) == DirClass::system_app) b.entries[path] = bytes;
  }
  return b;
}

void write_at(std::string& content, std::int64_t offset, std::string_view data) {
  if (offset < 0) throw Error(ErrorCode::InvalidArgument, "negative write offset");
  auto off = static_cast<std::size_t>(offset);
  if (content.size() < off + data.size()) content.resize(off + data.size(), '\0');
  std::copy(data.begin(), data.end(), content.begin() + static_cast<std::ptrdiff_t>(off));
}

void apply_file_op_in_place(FileTree& tree, const FileOperation& op, Diagnostics* diags) {
  require_normalized(op.path);
  auto it = tree.entries.find(op.path);
  switch (op.kind) {
    case FileOpKind::create: {
      if (it == tree.entries.end()) {
        it = tree.entries.emplace(op.path, std::string()).first;
      } else if (op.truncate) {
        it->second.clear();
      }
      if (op.payload) write_at(it->second, op.payload->offset, op.payload->data);
      break;
    }
    case FileOpKind::write: {
      if (it == tree.entries.end()) throw Error(ErrorCode::MissingFile, "write to " + op.path);
      if (!op.payload) throw Error(ErrorCode::InvalidArgument, "write without payload on " + op.path);
      write_at(it->second, op.payload->offset, op.payload->data);
      break;
    }
    case FileOpKind::remove: {
      if (it == tree.entries.end()) {
        if (diags) diags->push_back({"MissingFile", "delete of absent " + op.path});
        return;
      }
      tree.entries.erase(it);
      break;
    }
    case FileOpKind::rename: {
      if (it == tree.entries.end()) throw Error(ErrorCode::MissingFile, "rename of " + op.path);
      if (!op.rename_to) throw Error(ErrorCode::InvalidArgument, "rename without target on " + op.path);
      require_normalized(*op.rename_to);
      std::string bytes = std::move(it->second);
      tree.entries.erase(it);
      tree.entries[*op.rename_to] = std::move(bytes);
      break;
    }
  }
}

FileTree apply_file_op(FileTree tree, const FileOperation& op, Diagnostics* diags) {
  apply_file_op_in_place(tree, op, diags);
  return tree;
}

void baseline_restore_in_place(FileTree& tree, const std::string& path, const Baseline& baseline) {
  if (tree.classification.classify(path) != DirClass::system_app) throw Error(ErrorCode::NotSystemPath, path);
  auto it = baseline.entries.find(path);
  if (it == baseline.entries.end()) {
    tree.entries.erase(path);
  } else {
    tree.entries[path] = it->second;
  }
}

FileTree baseline_restore(FileTree tree, const std::string& path, const Baseline& baseline) {
  baseline_restore_in_place(tree, path, baseline);
  return tree;
}

}  // namespace rwd
