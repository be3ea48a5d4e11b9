#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rewind/file_tree.hpp"
#include "rewind/trace.hpp"

namespace rwd {

struct Manifest {
  Nanos ts = 0;
  std::map<std::string, std::string> entries;  // path -> content hash

  bool operator==(const Manifest&) const = default;
};

// Point-in-time manifests over a content-addressed store. A file unchanged
// since the previous backup shares its hash, so it costs no new bytes.
class BackupChain {
 public:
  // Backs up the data-classified entries of `tree` (every entry when the tree
  // is unclassified). Returns the number of bytes newly added to the store.
  // Throws NonMonotoneTs.
  std::size_t incremental_backup(const FileTree& tree, Nanos ts);

  // Content from the latest manifest with ts <= `ts`; nullopt when the path
  // is absent there. Throws NoBackupBefore.
  std::optional<std::string> restore_file_version(const std::string& path, Nanos ts) const;

  // Latest manifest ts <= `ts`, if any.
  std::optional<Nanos> version_at(Nanos ts) const;

  const std::vector<Manifest>& manifests() const { return manifests_; }
  const std::map<std::string, std::string>& store() const { return store_; }
  std::size_t store_bytes() const;
  bool empty() const { return manifests_.empty(); }

  // objects/<hash> plus manifests/<ts>.json under `dir`.
  void save(const std::string& dir) const;
  // Throws CorruptSnapshot when an object does not match its hash or a
  // manifest references a missing object.
  static BackupChain load(const std::string& dir);

 private:
  std::vector<Manifest> manifests_;
  std::map<std::string, std::string> store_;
};

}  // namespace rwd
