#include "cio/archive.hpp"

#include <algorithm>
#include <cstring>

#include "cio/crc32.hpp"

namespace fs = std::filesystem;

namespace cio::archive {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      n = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      n = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      n = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    for (std::size_t k = 1; k <= n; ++k) {
      if (i + k >= s.size()) return false;
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[n] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += n + 1;
  }
  return true;
}

Footer decode_footer(const std::uint8_t* p) {
  return Footer{get_u64(p), get_u32(p + 8), get_u32(p + 12)};
}

// Parses `count` records; checks ordering and extents against [kHeaderSize, dir_offset).
std::vector<DirectoryEntry> parse_directory(std::span<const std::uint8_t> dir, std::uint32_t count,
                                            std::uint64_t dir_offset) {
  std::vector<DirectoryEntry> entries;
  entries.reserve(std::min<std::uint64_t>(count, dir.size() / 24 + 1));
  std::set<std::string> seen;
  std::size_t pos = 0;
  std::uint64_t next_free = kHeaderSize;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (dir.size() - pos < 4) throw Error(ErrorCode::corrupt, "truncated directory record");
    const std::uint32_t len = get_u32(dir.data() + pos);
    pos += 4;
    if (dir.size() - pos < std::uint64_t{len} + 20) throw Error(ErrorCode::corrupt, "truncated directory record");
    DirectoryEntry e;
    e.path.assign(reinterpret_cast<const char*>(dir.data() + pos), len);
    pos += len;
    e.offset = get_u64(dir.data() + pos);
    e.size = get_u64(dir.data() + pos + 8);
    e.crc32 = get_u32(dir.data() + pos + 16);
    pos += 20;
    if (e.offset < next_free || e.size > dir_offset || e.offset > dir_offset - e.size) {
      throw Error(ErrorCode::corrupt, "member extent out of order or out of range");
    }
    if (!seen.insert(e.path).second) throw Error(ErrorCode::corrupt, "duplicate member path");
    next_free = e.offset + e.size;
    entries.push_back(std::move(e));
  }
  if (pos != dir.size()) throw Error(ErrorCode::corrupt, "directory length mismatch");
  return entries;
}

}  // namespace

// ------------------------------------------------------------ byte io

void ByteSource::read_at(std::uint64_t offset, std::span<std::uint8_t> out) const {
  if (offset > size() || out.size() > size() - offset) {
    throw Error(ErrorCode::corrupt, "read past end of source");
  }
  ++reads_;
  bytes_read_ += out.size();
  do_read(offset, out);
}

void MemorySink::write_at(std::uint64_t offset, std::span<const std::uint8_t> data) {
  if (data_.size() < offset + data.size()) data_.resize(offset + data.size());
  std::copy(data.begin(), data.end(), data_.begin() + static_cast<std::ptrdiff_t>(offset));
}

void MemorySource::do_read(std::uint64_t offset, std::span<std::uint8_t> out) const {
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(offset), out.size(), out.begin());
}

FileSink::FileSink(const fs::path& path, bool truncate_existing) : path_(path) {
  if (truncate_existing) {
    std::ofstream create(path, std::ios::binary | std::ios::trunc);
    if (!create) throw Error(ErrorCode::io, "cannot create " + path.string());
  }
  file_.open(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!file_) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
}

void FileSink::write_at(std::uint64_t offset, std::span<const std::uint8_t> data) {
  file_.seekp(static_cast<std::streamoff>(offset));
  file_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!file_) throw Error(ErrorCode::io, "write failed on " + path_.string());
}

void FileSink::truncate(std::uint64_t size) {
  file_.flush();
  file_.close();
  fs::resize_file(path_, size);
  file_.open(path_, std::ios::binary | std::ios::in | std::ios::out);
  if (!file_) throw Error(ErrorCode::io, "cannot reopen " + path_.string());
}

void FileSink::flush() {
  file_.flush();
  if (!file_) throw Error(ErrorCode::io, "flush failed on " + path_.string());
}

FileSource::FileSource(const fs::path& path) : file_(path, std::ios::binary) {
  if (!file_) throw Error(ErrorCode::io, "cannot open " + path.string());
  size_ = fs::file_size(path);
}

void FileSource::do_read(std::uint64_t offset, std::span<std::uint8_t> out) const {
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(offset));
  file_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file_) throw Error(ErrorCode::io, "read failed");
}

// ------------------------------------------------------------ encoding

void validate_member_path(const std::string& path) {
  if (path.empty() || path.size() > kMaxPathLength || path.front() == '/' ||
      path.find('\0') != std::string::npos || !valid_utf8(path)) {
    throw Error(ErrorCode::invalid_argument, "invalid member path '" + path + "'");
  }
}

Bytes encode_directory(std::span<const DirectoryEntry> entries) {
  Bytes out;
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.path.size()));
    out.insert(out.end(), e.path.begin(), e.path.end());
    put_u64(out, e.offset);
    put_u64(out, e.size);
    put_u32(out, e.crc32);
  }
  return out;
}

std::array<std::uint8_t, kFooterSize> encode_footer(const Footer& footer) {
  Bytes b;
  put_u64(b, footer.directory_offset);
  put_u32(b, footer.entry_count);
  put_u32(b, footer.directory_crc32);
  std::array<std::uint8_t, kFooterSize> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

std::uint64_t encoded_size(std::span<const DirectoryEntry> entries) {
  std::uint64_t total = kHeaderSize + kFooterSize;
  for (const auto& e : entries) total += e.size + 4 + e.path.size() + 20;
  return total;
}

// ------------------------------------------------------------ writer

Writer::Writer(std::unique_ptr<ByteSink> sink, std::uint64_t position, std::vector<DirectoryEntry> entries)
    : sink_(std::move(sink)), position_(position), entries_(std::move(entries)) {
  for (const auto& e : entries_) paths_.insert(e.path);
}

Writer create_archive(std::unique_ptr<ByteSink> sink) {
  if (!sink) throw Error(ErrorCode::invalid_argument, "null sink");
  sink->write_at(0, kMagic);
  return Writer(std::move(sink), kHeaderSize, {});
}

Writer create_archive(const fs::path& path) {
  return create_archive(std::make_unique<FileSink>(path, true));
}

DirectoryEntry Writer::append_member(const std::string& path, std::span<const std::uint8_t> bytes) {
  if (finalized_) throw Error(ErrorCode::finalized, "archive writer already finalized");
  validate_member_path(path);
  if (paths_.count(path)) throw Error(ErrorCode::exists, "duplicate member '" + path + "'");
  DirectoryEntry e{path, position_, bytes.size(), crc32(bytes)};
  sink_->write_at(position_, bytes);
  position_ += bytes.size();
  paths_.insert(path);
  entries_.push_back(e);
  return e;
}

void Writer::finalize() {
  if (finalized_) throw Error(ErrorCode::finalized, "archive writer already finalized");
  const Bytes dir = encode_directory(entries_);
  const Footer footer{position_, static_cast<std::uint32_t>(entries_.size()), crc32(dir)};
  sink_->write_at(position_, dir);
  sink_->write_at(position_ + dir.size(), encode_footer(footer));
  sink_->truncate(position_ + dir.size() + kFooterSize);
  sink_->flush();
  finalized_ = true;
}

Writer append_to_existing(std::unique_ptr<ByteSink> sink, const ByteSource& current) {
  Reader r = open_archive(current);
  return Writer(std::move(sink), r.footer().directory_offset, r.entries());
}

Writer append_to_existing(const fs::path& path) {
  FileSource current(path);
  return append_to_existing(std::make_unique<FileSink>(path, false), current);
}

// ------------------------------------------------------------ reader

Reader open_archive(const ByteSource& source) {
  const std::uint64_t size = source.size();
  if (size < kHeaderSize + kFooterSize) throw Error(ErrorCode::not_an_archive, "file too short to be an archive");
  std::array<std::uint8_t, kHeaderSize> magic{};
  source.read_at(0, magic);
  if (magic != kMagic) throw Error(ErrorCode::not_an_archive, "bad archive magic");

  std::array<std::uint8_t, kFooterSize> tail{};
  source.read_at(size - kFooterSize, tail);
  Reader r;
  r.source_ = &source;
  r.footer_ = decode_footer(tail.data());
  const std::uint64_t dir_end = size - kFooterSize;
  if (r.footer_.directory_offset < kHeaderSize || r.footer_.directory_offset > dir_end) {
    throw Error(ErrorCode::corrupt, "corrupt footer: directory offset out of range");
  }
  Bytes dir(dir_end - r.footer_.directory_offset);
  source.read_at(r.footer_.directory_offset, dir);
  if (crc32(dir) != r.footer_.directory_crc32) {
    throw Error(ErrorCode::corrupt, "corrupt footer: directory checksum mismatch");
  }
  r.entries_ = parse_directory(dir, r.footer_.entry_count, r.footer_.directory_offset);
  return r;
}

std::vector<std::string> Reader::list_members() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.path);
  return out;
}

const DirectoryEntry& Reader::entry(const std::string& path) const {
  for (const auto& e : entries_) {
    if (e.path == path) return e;
  }
  throw Error(ErrorCode::not_found, "no member '" + path + "'");
}

Bytes Reader::extract_member(const std::string& path) const {
  const auto& e = entry(path);
  Bytes out(e.size);
  source_->read_at(e.offset, out);
  if (crc32(out) != e.crc32) throw Error(ErrorCode::corrupt, "member '" + path + "' fails its checksum");
  return out;
}

std::vector<MemberStatus> Reader::verify() const {
  std::vector<MemberStatus> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) {
    Bytes data(e.size);
    source_->read_at(e.offset, data);
    const std::uint32_t actual = crc32(data);
    out.push_back({e.path, actual == e.crc32, e.crc32, actual});
  }
  return out;
}

std::optional<Recovery> recover(const ByteSource& source) {
  const std::uint64_t size = source.size();
  if (size < kHeaderSize + kFooterSize) return std::nullopt;
  Bytes all(size);
  source.read_at(0, all);
  if (!std::equal(kMagic.begin(), kMagic.end(), all.begin())) return std::nullopt;
  for (std::uint64_t end = size; end >= kHeaderSize + kFooterSize; --end) {
    const std::uint64_t at = end - kFooterSize;
    const Footer f = decode_footer(all.data() + at);
    if (f.directory_offset < kHeaderSize || f.directory_offset > at) continue;
    std::span<const std::uint8_t> dir(all.data() + f.directory_offset, at - f.directory_offset);
    if (std::uint64_t{f.entry_count} * 24 > dir.size()) continue;
    if (crc32(dir) != f.directory_crc32) continue;
    try {
      auto entries = parse_directory(dir, f.entry_count, f.directory_offset);
      return Recovery{end, f, std::move(entries)};
    } catch (const Error&) {
      continue;
    }
  }
  return std::nullopt;
}

}  // namespace cio::archive
