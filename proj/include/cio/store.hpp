#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cio/common.hpp"

namespace cio::store {

enum class Tier { gfs, ifs, lfs };
const char* to_string(Tier tier);

using Bytes = std::vector<std::uint8_t>;

/// Object payload: either real bytes or only a size (simulation mode).
struct Blob {
  std::uint64_t size = 0;
  std::shared_ptr<const Bytes> bytes;

  static Blob sized(std::uint64_t n) { return Blob{n, nullptr}; }
  static Blob of(Bytes data);
  bool materialized() const { return bytes != nullptr; }
};

struct FileObject {
  std::string name;  // full path inside the store
  std::uint64_t size = 0;
  std::uint32_t crc32 = 0;  // meaningful only when content is materialized
  std::shared_ptr<const Bytes> content;
};

/// Splits "a/b/c" into ("a/b", "c"); the root directory is "".
std::pair<std::string, std::string> split_path(const std::string& path);
std::string join_path(const std::string& dir, const std::string& leaf);
/// Rejects empty names, leading '/', empty or ".." components.
void validate_path(const std::string& path);

/// Point-in-time view of every object in a store, keyed by full path.
using Snapshot = std::map<std::string, std::uint64_t>;

/// Hierarchical named-object store with exact capacity accounting. All
/// operations are safe to call concurrently.
class Store {
 public:
  virtual ~Store() = default;

  virtual Tier tier() const = 0;
  virtual std::uint64_t capacity() const = 0;
  virtual std::uint64_t used() const = 0;
  std::uint64_t free_space() const { return capacity() - used(); }

  virtual FileObject put(const std::string& name, const Blob& content) = 0;
  virtual Bytes get(const std::string& name) const = 0;
  virtual FileObject stat(const std::string& name) const = 0;
  virtual bool contains(const std::string& name) const = 0;
  virtual void remove(const std::string& name) = 0;
  virtual std::vector<std::string> list(const std::string& dir) const = 0;
  virtual void make_dir(const std::string& dir) = 0;
  virtual bool has_dir(const std::string& dir) const = 0;
  /// Moves `from_dir/name` to `to_dir/name`; the object is visible in
  /// exactly one of the two directories at every observable instant.
  virtual FileObject atomic_move(const std::string& from_dir, const std::string& to_dir,
                                 const std::string& name) = 0;
  virtual Snapshot snapshot() const = 0;
  /// Sum of object sizes recomputed from scratch.
  virtual std::uint64_t recount_used() const = 0;
};

class MemoryStore final : public Store {
 public:
  MemoryStore(Tier tier, std::uint64_t capacity) : tier_(tier), capacity_(capacity) {}

  Tier tier() const override { return tier_; }
  std::uint64_t capacity() const override { return capacity_; }
  std::uint64_t used() const override;
  FileObject put(const std::string& name, const Blob& content) override;
  Bytes get(const std::string& name) const override;
  FileObject stat(const std::string& name) const override;
  bool contains(const std::string& name) const override;
  void remove(const std::string& name) override;
  std::vector<std::string> list(const std::string& dir) const override;
  void make_dir(const std::string& dir) override;
  bool has_dir(const std::string& dir) const override;
  FileObject atomic_move(const std::string& from_dir, const std::string& to_dir,
                         const std::string& name) override;
  Snapshot snapshot() const override;
  std::uint64_t recount_used() const override;

 private:
  void ensure_dirs(const std::string& dir);
  const FileObject& find(const std::string& name) const;

  Tier tier_;
  std::uint64_t capacity_;
  mutable std::shared_mutex mu_;
  std::uint64_t used_ = 0;
  std::set<std::string> dirs_{""};
  std::map<std::string, std::map<std::string, FileObject>> objects_;  // dir -> leaf -> object
};

/// Stores objects as files under `<root>/<tier>/<path>` with a per-directory
/// `.cio-index` sidecar of `name,size,crc32hex` lines. Reads verify checksums.
/// Object payload suitable for put() into another store: shares the
/// in-memory content when there is any, stays size-only for size-only memory
/// objects and reads the bytes otherwise.
Blob read_blob(const Store& s, const std::string& name);

class DirectoryStore final : public Store {
 public:
  DirectoryStore(std::filesystem::path root, Tier tier, std::uint64_t capacity);

  Tier tier() const override { return tier_; }
  std::uint64_t capacity() const override { return capacity_; }
  std::uint64_t used() const override;
  FileObject put(const std::string& name, const Blob& content) override;
  Bytes get(const std::string& name) const override;
  FileObject stat(const std::string& name) const override;
  bool contains(const std::string& name) const override;
  void remove(const std::string& name) override;
  std::vector<std::string> list(const std::string& dir) const override;
  void make_dir(const std::string& dir) override;
  bool has_dir(const std::string& dir) const override;
  FileObject atomic_move(const std::string& from_dir, const std::string& to_dir,
                         const std::string& name) override;
  Snapshot snapshot() const override;
  std::uint64_t recount_used() const override;

  const std::filesystem::path& base() const { return base_; }
  static constexpr const char* kIndexName = ".cio-index";

 private:
  struct Entry {
    std::uint64_t size;
    std::uint32_t crc32;
  };
  std::filesystem::path dir_path(const std::string& dir) const;
  void load_index(const std::string& dir);
  void write_index(const std::string& dir) const;
  void ensure_dirs(const std::string& dir);
  const Entry& find(const std::string& name) const;

  std::filesystem::path base_;
  Tier tier_;
  std::uint64_t capacity_;
  mutable std::shared_mutex mu_;
  std::uint64_t used_ = 0;
  std::set<std::string> dirs_{""};
  std::map<std::string, std::map<std::string, Entry>> index_;
};

struct ChunkPlacement {
  std::uint32_t server = 0;  // index into the stripe's server list
  std::uint64_t chunk = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct StripeMap {
  std::string name;
  std::uint64_t size = 0;
  std::uint64_t chunk_size = 0;
  std::vector<ChunkPlacement> chunks;
};

/// Round-robin chunk layout of an object of `size` bytes over `width` servers.
StripeMap plan_stripe(const std::string& name, std::uint64_t size, std::uint64_t chunk_size,
                      std::uint32_t width);

inline constexpr std::uint64_t kDefaultChunkSize = 1 * MiB;

/// An IFS assembled from several LFS-backed servers.
class StripedStore {
 public:
  StripedStore(std::vector<std::shared_ptr<Store>> servers, std::uint64_t chunk_size);

  std::uint64_t capacity() const;
  std::uint64_t free_space() const;
  std::uint64_t chunk_size() const { return chunk_size_; }
  std::size_t width() const { return servers_.size(); }
  const Store& server(std::size_t i) const { return *servers_[i]; }

  StripeMap put(const std::string& name, const Blob& content);
  Bytes get(const std::string& name) const;
  const StripeMap& stripe_map(const std::string& name) const;
  void remove(const std::string& name);

  static std::string chunk_name(const std::string& name, std::uint64_t chunk);

 private:
  std::vector<std::shared_ptr<Store>> servers_;
  std::uint64_t chunk_size_;
  mutable std::shared_mutex mu_;
  std::map<std::string, StripeMap> maps_;
};

StripedStore stripe_create(std::vector<std::shared_ptr<Store>> servers,
                           std::uint64_t chunk_size = kDefaultChunkSize);

}  // namespace cio::store
