#include "rewind/backup.hpp"

#include <algorithm>
#include <filesystem>

namespace rwd {

std::size_t BackupChain::incremental_backup(const FileTree& tree, Nanos ts) {
  if (!manifests_.empty() && ts <= manifests_.back().ts) {
    throw Error(ErrorCode::NonMonotoneTs,
                std::to_string(ts) + " is not after last backup " + std::to_string(manifests_.back().ts));
  }
  Manifest m;
  m.ts = ts;
  std::size_t added = 0;
  for (const auto& [path, bytes] : tree.entries) {
    if (!tree.classification.empty() && tree.classification.classify(path) != DirClass::data) continue;
    std::string h = sha256_hex(bytes);
    if (store_.emplace(h, bytes).second) added += bytes.size();
    m.entries.emplace(path, std::move(h));
  }
  manifests_.push_back(std::move(m));
  return added;
}

std::optional<Nanos> BackupChain::version_at(Nanos ts) const {
  auto it = std::upper_bound(manifests_.begin(), manifests_.end(), ts,
                             [](Nanos t, const Manifest& m) { return t < m.ts; });
  if (it == manifests_.begin()) return std::nullopt;
  return std::prev(it)->ts;
}

std::optional<std::string> BackupChain::restore_file_version(const std::string& path, Nanos ts) const {
  auto it = std::upper_bound(manifests_.begin(), manifests_.end(), ts,
                             [](Nanos t, const Manifest& m) { return t < m.ts; });
  if (it == manifests_.begin()) throw Error(ErrorCode::NoBackupBefore, path + " at " + std::to_string(ts));
  const Manifest& m = *std::prev(it);
  auto e = m.entries.find(path);
  if (e == m.entries.end()) return std::nullopt;
  return store_.at(e->second);
}

std::size_t BackupChain::store_bytes() const {
  std::size_t n = 0;
  for (const auto& [_, bytes] : store_) n += bytes.size();
  return n;
}

void BackupChain::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "objects");
  fs::create_directories(fs::path(dir) / "manifests");
  for (const auto& [hash, bytes] : store_) {
    write_file_atomic((fs::path(dir) / "objects" / hash).string(), bytes);
  }
  for (const Manifest& m : manifests_) {
    json e = json::object();
    for (const auto& [path, hash] : m.entries) e[path] = hash;
    json j = {{"ts", m.ts}, {"entries", e}};
    write_file_atomic((fs::path(dir) / "manifests" / (std::to_string(m.ts) + ".json")).string(),
                      canonical_dump(j));
  }
}

BackupChain BackupChain::load(const std::string& dir) {
  namespace fs = std::filesystem;
  BackupChain chain;
  fs::path objects = fs::path(dir) / "objects";
  fs::path manifests = fs::path(dir) / "manifests";
  if (fs::exists(objects)) {
    for (const auto& entry : fs::directory_iterator(objects)) {
      std::string bytes = read_file(entry.path().string());
      std::string name = entry.path().filename().string();
      if (sha256_hex(bytes) != name) throw Error(ErrorCode::CorruptSnapshot, "object " + name + " fails its hash");
      chain.store_.emplace(name, std::move(bytes));
    }
  }
  if (fs::exists(manifests)) {
    for (const auto& entry : fs::directory_iterator(manifests)) {
      json j = json::parse(read_file(entry.path().string()));
      Manifest m;
      m.ts = j.at("ts").get<Nanos>();
      for (const auto& [path, hash] : j.at("entries").items()) {
        std::string h = hash.get<std::string>();
        if (!chain.store_.contains(h)) throw Error(ErrorCode::CorruptSnapshot, "manifest references missing " + h);
        m.entries.emplace(path, h);
      }
      chain.manifests_.push_back(std::move(m));
    }
  }
  std::sort(chain.manifests_.begin(), chain.manifests_.end(),
            [](const Manifest& a, const Manifest& b) { return a.ts < b.ts; });
  return chain;
}

}  // namespace rwd
