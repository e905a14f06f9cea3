#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

#include "cio/crc32.hpp"
#include "cio/store.hpp"

namespace fs = std::filesystem;

namespace cio::store {

namespace {

constexpr const char* kTmpPrefix = ".cio-tmp-";

void write_file(const fs::path& p, std::span<const std::uint8_t> data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::io, "short write to " + p.string());
}

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void check_leaf(const std::string& path) {
  const auto leaf = split_path(path).second;
  if (leaf.rfind(".cio-", 0) == 0) {
    throw Error(ErrorCode::invalid_argument, "names starting with .cio- are reserved");
  }
}

}  // namespace

DirectoryStore::DirectoryStore(fs::path root, Tier tier, std::uint64_t capacity)
    : base_(std::move(root) / to_string(tier)), tier_(tier), capacity_(capacity) {
  fs::create_directories(base_);
  load_index("");
  for (const auto& entry : fs::recursive_directory_iterator(base_)) {
    if (!entry.is_directory()) continue;
    const std::string rel = fs::relative(entry.path(), base_).generic_string();
    dirs_.insert(rel);
    load_index(rel);
  }
}

fs::path DirectoryStore::dir_path(const std::string& dir) const {
  return dir.empty() ? base_ : base_ / fs::path(dir);
}

void DirectoryStore::load_index(const std::string& dir) {
  std::ifstream in(dir_path(dir) / kIndexName);
  if (!in) return;
  std::string line;
  auto& slot = index_[dir];
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw Error(ErrorCode::corrupt, "bad index line in " + dir_path(dir).string());
    }
    Entry e{std::stoull(line.substr(c1 + 1, c2 - c1 - 1)),
            static_cast<std::uint32_t>(std::stoul(line.substr(c2 + 1), nullptr, 16))};
    slot[line.substr(0, c1)] = e;
    used_ += e.size;
  }
}

void DirectoryStore::write_index(const std::string& dir) const {
  std::ostringstream text;
  auto it = index_.find(dir);
  if (it != index_.end()) {
    char hex[9];
    for (const auto& [leaf, e] : it->second) {
      std::snprintf(hex, sizeof hex, "%08x", e.crc32);
      text << leaf << ',' << e.size << ',' << hex << '\n';
    }
  }
  const auto s = text.str();
  const fs::path tmp = dir_path(dir) / (std::string(kTmpPrefix) + "index");
  write_file(tmp, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  fs::rename(tmp, dir_path(dir) / kIndexName);
}

void DirectoryStore::ensure_dirs(const std::string& dir) {
  if (dir.empty() || dirs_.count(dir)) return;
  fs::create_directories(dir_path(dir));
  std::string d = dir;
  while (!d.empty() && dirs_.insert(d).second) d = split_path(d).first;
}

const DirectoryStore::Entry& DirectoryStore::find(const std::string& name) const {
  const auto [dir, leaf] = split_path(name);
  auto d = index_.find(dir);
  if (d != index_.end()) {
    auto e = d->second.find(leaf);
    if (e != d->second.end()) return e->second;
  }
  throw Error(ErrorCode::not_found, "no object '" + name + "'");
}

std::uint64_t DirectoryStore::used() const {
  std::shared_lock lock(mu_);
  return used_;
}

FileObject DirectoryStore::put(const std::string& name, const Blob& content) {
  validate_path(name);
  check_leaf(name);
  if (!content.bytes) {
    throw Error(ErrorCode::invalid_argument, "directory-backed stores need materialized content");
  }
  const auto [dir, leaf] = split_path(name);
  const std::uint32_t crc = crc32(*content.bytes);
  std::unique_lock lock(mu_);
  if (dirs_.count(name)) throw Error(ErrorCode::exists, "'" + name + "' is a directory");
  if (index_[dir].count(leaf)) throw Error(ErrorCode::exists, "object '" + name + "' exists");
  if (content.size > capacity_ - used_) {
    throw Error(ErrorCode::store_full, std::string(to_string(tier_)) + " store full writing '" + name + "'");
  }
  ensure_dirs(dir);
  const fs::path tmp = dir_path(dir) / (kTmpPrefix + leaf);
  write_file(tmp, *content.bytes);
  fs::rename(tmp, dir_path(dir) / leaf);
  index_[dir][leaf] = Entry{content.size, crc};
  used_ += content.size;
  write_index(dir);
  return FileObject{name, content.size, crc, content.bytes};
}

Bytes DirectoryStore::get(const std::string& name) const {
  std::shared_lock lock(mu_);
  const Entry e = find(name);
  auto data = read_file(dir_path(split_path(name).first) / split_path(name).second);
  if (data.size() != e.size || crc32(data) != e.crc32) {
    throw Error(ErrorCode::corrupt, "checksum mismatch reading '" + name + "'");
  }
  return data;
}

FileObject DirectoryStore::stat(const std::string& name) const {
  std::shared_lock lock(mu_);
  const Entry e = find(name);
  return FileObject{name, e.size, e.crc32, nullptr};
}

bool DirectoryStore::contains(const std::string& name) const {
  std::shared_lock lock(mu_);
  const auto [dir, leaf] = split_path(name);
  auto d = index_.find(dir);
  return d != index_.end() && d->second.count(leaf) > 0;
}

void DirectoryStore::remove(const std::string& name) {
  const auto [dir, leaf] = split_path(name);
  std::unique_lock lock(mu_);
  const Entry e = find(name);
  fs::remove(dir_path(dir) / leaf);
  index_[dir].erase(leaf);
  used_ -= e.size;
  write_index(dir);
}

std::vector<std::string> DirectoryStore::list(const std::string& dir) const {
  std::shared_lock lock(mu_);
  if (!dirs_.count(dir)) throw Error(ErrorCode::not_found, "no directory '" + dir + "'");
  std::vector<std::string> out;
  auto d = index_.find(dir);
  if (d != index_.end()) {
    for (const auto& [leaf, e] : d->second) out.push_back(leaf);
  }
  return out;
}

void DirectoryStore::make_dir(const std::string& dir) {
  if (!dir.empty()) validate_path(dir);
  std::unique_lock lock(mu_);
  ensure_dirs(dir);
}

bool DirectoryStore::has_dir(const std::string& dir) const {
  std::shared_lock lock(mu_);
  return dirs_.count(dir) > 0;
}

FileObject DirectoryStore::atomic_move(const std::string& from_dir, const std::string& to_dir,
                                       const std::string& name) {
  std::unique_lock lock(mu_);
  if (!dirs_.count(to_dir)) throw Error(ErrorCode::not_found, "no directory '" + to_dir + "'");
  const Entry e = find(join_path(from_dir, name));
  if (index_[to_dir].count(name)) {
    throw Error(ErrorCode::exists, "object '" + join_path(to_dir, name) + "' exists");
  }
  fs::rename(dir_path(from_dir) / name, dir_path(to_dir) / name);
  index_[from_dir].erase(name);
  index_[to_dir][name] = e;
  write_index(to_dir);
  write_index(from_dir);
  return FileObject{join_path(to_dir, name), e.size, e.crc32, nullptr};
}

Snapshot DirectoryStore::snapshot() const {
  std::shared_lock lock(mu_);
  Snapshot s;
  for (const auto& [dir, leaves] : index_) {
    for (const auto& [leaf, e] : leaves) s.emplace(join_path(dir, leaf), e.size);
  }
  return s;
}

std::uint64_t DirectoryStore::recount_used() const {
  std::shared_lock lock(mu_);
  std::uint64_t total = 0;
  for (const auto& entry : fs::recursive_directory_iterator(base_)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename().string().rfind(".cio-", 0) == 0) continue;
    total += entry.file_size();
  }
  return total;
}

}  // namespace cio::store
