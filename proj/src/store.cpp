#include <algorithm>
#include <mutex>

#include "cio/crc32.hpp"
#include "cio/store.hpp"

namespace cio::store {

const char* to_string(Tier tier) {
  switch (tier) {
    case Tier::gfs: return "gfs";
    case Tier::ifs: return "ifs";
    case Tier::lfs: return "lfs";
  }
  return "?";
}

Blob Blob::of(Bytes data) {
  const std::uint64_t n = data.size();
  return Blob{n, std::make_shared<const Bytes>(std::move(data))};
}

std::pair<std::string, std::string> split_path(const std::string& path) {
  const auto slash = path.rfind('/');
  if (slash == std::string::npos) return {"", path};
  return {path.substr(0, slash), path.substr(slash + 1)};
}

std::string join_path(const std::string& dir, const std::string& leaf) {
  return dir.empty() ? leaf : dir + "/" + leaf;
}

void validate_path(const std::string& path) {
  if (path.empty() || path.front() == '/' || path.back() == '/') {
    throw Error(ErrorCode::invalid_argument, "invalid object path '" + path + "'");
  }
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto end = std::min(path.find('/', start), path.size());
    const auto part = path.substr(start, end - start);
    if (part.empty() || part == ".." || part == ".") {
      throw Error(ErrorCode::invalid_argument, "invalid object path '" + path + "'");
    }
    start = end + 1;
  }
}

// ---------------------------------------------------------------- memory

std::uint64_t MemoryStore::used() const {
  std::shared_lock lock(mu_);
  return used_;
}

void MemoryStore::ensure_dirs(const std::string& dir) {
  std::string d = dir;
  while (!d.empty() && dirs_.insert(d).second) d = split_path(d).first;
}

const FileObject& MemoryStore::find(const std::string& name) const {
  const auto [dir, leaf] = split_path(name);
  auto d = objects_.find(dir);
  if (d != objects_.end()) {
    auto o = d->second.find(leaf);
    if (o != d->second.end()) return o->second;
  }
  throw Error(ErrorCode::not_found, "no object '" + name + "'");
}

FileObject MemoryStore::put(const std::string& name, const Blob& content) {
  validate_path(name);
  FileObject obj{name, content.size, 0, content.bytes};
  if (content.bytes) obj.crc32 = crc32(*content.bytes);
  const auto [dir, leaf] = split_path(name);
  std::unique_lock lock(mu_);
  if (dirs_.count(name)) throw Error(ErrorCode::exists, "'" + name + "' is a directory");
  auto& slot = objects_[dir];
  if (slot.count(leaf)) throw Error(ErrorCode::exists, "object '" + name + "' exists");
  if (content.size > capacity_ - used_) {
    throw Error(ErrorCode::store_full, std::string(to_string(tier_)) + " store full writing '" + name + "'");
  }
  ensure_dirs(dir);
  slot.emplace(leaf, obj);
  used_ += content.size;
  return obj;
}

Bytes MemoryStore::get(const std::string& name) const {
  std::shared_lock lock(mu_);
  const auto& obj = find(name);
  if (!obj.content) return Bytes(obj.size, 0);
  return *obj.content;
}

FileObject MemoryStore::stat(const std::string& name) const {
  std::shared_lock lock(mu_);
  return find(name);
}

bool MemoryStore::contains(const std::string& name) const {
  std::shared_lock lock(mu_);
  const auto [dir, leaf] = split_path(name);
  auto d = objects_.find(dir);
  return d != objects_.end() && d->second.count(leaf) > 0;
}

void MemoryStore::remove(const std::string& name) {
  const auto [dir, leaf] = split_path(name);
  std::unique_lock lock(mu_);
  auto d = objects_.find(dir);
  if (d == objects_.end() || !d->second.count(leaf)) {
    throw Error(ErrorCode::not_found, "no object '" + name + "'");
  }
  used_ -= d->second.at(leaf).size;
  d->second.erase(leaf);
}

std::vector<std::string> MemoryStore::list(const std::string& dir) const {
  std::shared_lock lock(mu_);
  if (!dirs_.count(dir)) throw Error(ErrorCode::not_found, "no directory '" + dir + "'");
  std::vector<std::string> out;
  auto d = objects_.find(dir);
  if (d != objects_.end()) {
    for (const auto& [leaf, obj] : d->second) out.push_back(leaf);
  }
  return out;
}

void MemoryStore::make_dir(const std::string& dir) {
  if (!dir.empty()) validate_path(dir);
  std::unique_lock lock(mu_);
  ensure_dirs(dir);
}

bool MemoryStore::has_dir(const std::string& dir) const {
  std::shared_lock lock(mu_);
  return dirs_.count(dir) > 0;
}

FileObject MemoryStore::atomic_move(const std::string& from_dir, const std::string& to_dir,
                                    const std::string& name) {
  std::unique_lock lock(mu_);
  if (!dirs_.count(to_dir)) throw Error(ErrorCode::not_found, "no directory '" + to_dir + "'");
  auto src = objects_.find(from_dir);
  if (src == objects_.end() || !src->second.count(name)) {
    throw Error(ErrorCode::not_found, "no object '" + join_path(from_dir, name) + "'");
  }
  auto& dst = objects_[to_dir];
  if (dst.count(name)) {
    throw Error(ErrorCode::exists, "object '" + join_path(to_dir, name) + "' exists");
  }
  auto node = src->second.extract(name);
  node.mapped().name = join_path(to_dir, name);
  auto it = dst.insert(std::move(node)).position;
  return it->second;
}

Snapshot MemoryStore::snapshot() const {
  std::shared_lock lock(mu_);
  Snapshot s;
  for (const auto& [dir, leaves] : objects_) {
    for (const auto& [leaf, obj] : leaves) s.emplace(join_path(dir, leaf), obj.size);
  }
  return s;
}

std::uint64_t MemoryStore::recount_used() const {
  std::shared_lock lock(mu_);
  std::uint64_t total = 0;
  for (const auto& [dir, leaves] : objects_) {
    for (const auto& [leaf, obj] : leaves) total += obj.size;
  }
  return total;
}

// ---------------------------------------------------------------- striping

StripeMap plan_stripe(const std::string& name, std::uint64_t size, std::uint64_t chunk_size,
                      std::uint32_t width) {
  if (chunk_size == 0 || width == 0) {
    throw Error(ErrorCode::invalid_argument, "stripe needs chunk_size > 0 and at least one server");
  }
  StripeMap m{name, size, chunk_size, {}};
  std::uint64_t offset = 0;
  std::uint64_t chunk = 0;
  do {
    const std::uint64_t len = std::min(chunk_size, size - offset);
    m.chunks.push_back({static_cast<std::uint32_t>(chunk % width), chunk, offset, len});
    offset += len;
    ++chunk;
  } while (offset < size);
  return m;
}

StripedStore::StripedStore(std::vector<std::shared_ptr<Store>> servers, std::uint64_t chunk_size)
    : servers_(std::move(servers)), chunk_size_(chunk_size) {
  if (servers_.empty()) throw Error(ErrorCode::invalid_argument, "stripe needs at least one server");
  if (chunk_size_ == 0) throw Error(ErrorCode::invalid_argument, "chunk_size must be positive");
}

std::uint64_t StripedStore::capacity() const {
  std::uint64_t c = 0;
  for (const auto& s : servers_) c += s->capacity();
  return c;
}

std::uint64_t StripedStore::free_space() const {
  std::uint64_t f = 0;
  for (const auto& s : servers_) f += s->free_space();
  return f;
}

std::string StripedStore::chunk_name(const std::string& name, std::uint64_t chunk) {
  return name + ".stripe/" + std::to_string(chunk);
}

Blob read_blob(const Store& s, const std::string& name) {
  if (dynamic_cast<const MemoryStore*>(&s)) {
    auto obj = s.stat(name);
    return Blob{obj.size, obj.content};
  }
  return Blob::of(s.get(name));
}

StripeMap StripedStore::put(const std::string& name, const Blob& content) {
  validate_path(name);
  std::unique_lock lock(mu_);
  if (maps_.count(name)) throw Error(ErrorCode::exists, "striped object '" + name + "' exists");
  if (content.size > free_space()) {
    throw Error(ErrorCode::store_full, "striped store full writing '" + name + "'");
  }
  auto m = plan_stripe(name, content.size, chunk_size_, static_cast<std::uint32_t>(servers_.size()));
  std::vector<const ChunkPlacement*> written;
  try {
    for (const auto& c : m.chunks) {
      Blob part = Blob::sized(c.length);
      if (content.bytes) {
        auto first = content.bytes->begin() + static_cast<std::ptrdiff_t>(c.offset);
        part = Blob::of(Bytes(first, first + static_cast<std::ptrdiff_t>(c.length)));
      }
      servers_[c.server]->put(chunk_name(name, c.chunk), part);
      written.push_back(&c);
    }
  } catch (...) {
    for (const auto* c : written) servers_[c->server]->remove(chunk_name(name, c->chunk));
    throw;
  }
  maps_.emplace(name, m);
  return m;
}

Bytes StripedStore::get(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = maps_.find(name);
  if (it == maps_.end()) throw Error(ErrorCode::not_found, "no striped object '" + name + "'");
  Bytes out;
  out.reserve(it->second.size);
  for (const auto& c : it->second.chunks) {
    auto part = servers_[c.server]->get(chunk_name(name, c.chunk));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

const StripeMap& StripedStore::stripe_map(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = maps_.find(name);
  if (it == maps_.end()) throw Error(ErrorCode::not_found, "no striped object '" + name + "'");
  return it->second;
}

void StripedStore::remove(const std::string& name) {
  std::unique_lock lock(mu_);
  auto it = maps_.find(name);
  if (it == maps_.end()) throw Error(ErrorCode::not_found, "no striped object '" + name + "'");
  for (const auto& c : it->second.chunks) servers_[c.server]->remove(chunk_name(name, c.chunk));
  maps_.erase(it);
}

StripedStore stripe_create(std::vector<std::shared_ptr<Store>> servers, std::uint64_t chunk_size) {
  return StripedStore(std::move(servers), chunk_size);
}

}  // namespace cio::store
