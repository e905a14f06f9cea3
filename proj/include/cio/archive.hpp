#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cio/common.hpp"

// Archive layout (all integers little-endian):
//
//   "CIOARCH1"                                   8 bytes
//   member bytes, back to back                   sum of sizes
//   directory, one record per member:
//     u32 path_len | path (UTF-8) | u64 offset | u64 size | u32 crc32
//   footer: u64 directory_offset | u32 entry_count | u32 directory_crc32
//
// The directory is written last so appending rewrites only the tail.

namespace cio::archive {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::array<std::uint8_t, 8> kMagic{'C', 'I', 'O', 'A', 'R', 'C', 'H', '1'};
inline constexpr std::uint64_t kHeaderSize = 8;
inline constexpr std::uint64_t kFooterSize = 16;
inline constexpr std::size_t kMaxPathLength = 65535;

struct DirectoryEntry {
  std::string path;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  std::uint32_t crc32 = 0;
  friend bool operator==(const DirectoryEntry&, const DirectoryEntry&) = default;
};

struct Footer {
  std::uint64_t directory_offset = 0;
  std::uint32_t entry_count = 0;
  std::uint32_t directory_crc32 = 0;
};

/// Random-access byte destination.
class ByteSink {
 public:
  virtual ~ByteSink() = default;
  virtual void write_at(std::uint64_t offset, std::span<const std::uint8_t> data) = 0;
  virtual void truncate(std::uint64_t size) = 0;
  virtual void flush() {}
};

/// Random-access byte origin; counts ranged reads for tests and tooling.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  void read_at(std::uint64_t offset, std::span<std::uint8_t> out) const;
  std::uint64_t reads() const { return reads_; }
  std::uint64_t bytes_read() const { return bytes_read_; }

 protected:
  virtual void do_read(std::uint64_t offset, std::span<std::uint8_t> out) const = 0;

 private:
  mutable std::uint64_t reads_ = 0;
  mutable std::uint64_t bytes_read_ = 0;
};

class MemorySink final : public ByteSink {
 public:
  MemorySink() = default;
  explicit MemorySink(Bytes initial) : data_(std::move(initial)) {}
  void write_at(std::uint64_t offset, std::span<const std::uint8_t> data) override;
  void truncate(std::uint64_t size) override { data_.resize(size); }
  const Bytes& bytes() const { return data_; }
  Bytes take() { return std::move(data_); }

 private:
  Bytes data_;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint64_t size() const override { return data_.size(); }

 private:
  void do_read(std::uint64_t offset, std::span<std::uint8_t> out) const override;
  std::span<const std::uint8_t> data_;
};

class FileSink final : public ByteSink {
 public:
  /// `truncate_existing` false opens an existing file for in-place update.
  FileSink(const std::filesystem::path& path, bool truncate_existing);
  void write_at(std::uint64_t offset, std::span<const std::uint8_t> data) override;
  void truncate(std::uint64_t size) override;
  void flush() override;

 private:
  std::filesystem::path path_;
  std::fstream file_;
};

class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path);
  std::uint64_t size() const override { return size_; }

 private:
  void do_read(std::uint64_t offset, std::span<std::uint8_t> out) const override;
  mutable std::ifstream file_;
  std::uint64_t size_ = 0;
};

/// Throws invalid_argument unless `path` is non-empty UTF-8, '/'-separated,
/// relative and at most kMaxPathLength bytes.
void validate_member_path(const std::string& path);

Bytes encode_directory(std::span<const DirectoryEntry> entries);
std::array<std::uint8_t, kFooterSize> encode_footer(const Footer& footer);
/// Bytes of a finalized archive holding members with these paths and sizes.
std::uint64_t encoded_size(std::span<const DirectoryEntry> entries);

class Writer {
 public:
  Writer(Writer&&) noexcept = default;
  Writer& operator=(Writer&&) noexcept = default;

  DirectoryEntry append_member(const std::string& path, std::span<const std::uint8_t> bytes);
  /// Writes directory and footer; the writer cannot be used afterwards.
  void finalize();
  bool finalized() const { return finalized_; }
  const std::vector<DirectoryEntry>& entries() const { return entries_; }
  ByteSink& sink() { return *sink_; }

 private:
  friend Writer create_archive(std::unique_ptr<ByteSink> sink);
  friend Writer append_to_existing(std::unique_ptr<ByteSink> sink, const ByteSource& current);
  Writer(std::unique_ptr<ByteSink> sink, std::uint64_t position, std::vector<DirectoryEntry> entries);

  std::unique_ptr<ByteSink> sink_;
  std::uint64_t position_ = 0;
  std::vector<DirectoryEntry> entries_;
  std::set<std::string> paths_;
  bool finalized_ = false;
};

/// Starts a new archive by writing the magic.
Writer create_archive(std::unique_ptr<ByteSink> sink);
Writer create_archive(const std::filesystem::path& path);
/// Reopens a finalized archive for appending; new members overwrite the old
/// directory and finalize() rewrites directory and footer.
Writer append_to_existing(std::unique_ptr<ByteSink> sink, const ByteSource& current);
Writer append_to_existing(const std::filesystem::path& path);

struct MemberStatus {
  std::string path;
  bool ok = false;
  std::uint32_t expected_crc32 = 0;
  std::uint32_t actual_crc32 = 0;
};

class Reader {
 public:
  const std::vector<DirectoryEntry>& entries() const { return entries_; }
  const Footer& footer() const { return footer_; }
  std::vector<std::string> list_members() const;
  const DirectoryEntry& entry(const std::string& path) const;
  /// One ranged read of the member extent; throws corrupt on crc mismatch.
  Bytes extract_member(const std::string& path) const;
  std::vector<MemberStatus> verify() const;

 private:
  friend Reader open_archive(const ByteSource& source);
  const ByteSource* source_ = nullptr;
  Footer footer_;
  std::vector<DirectoryEntry> entries_;
};

/// Reads the magic, the footer and the directory extent; never member bytes.
Reader open_archive(const ByteSource& source);

/// Result of scanning a damaged file for the last intact footer/directory.
struct Recovery {
  std::uint64_t valid_length = 0;  // bytes up to and including the footer found
  Footer footer;
  std::vector<DirectoryEntry> entries;
};

/// Scans backwards for a footer whose directory checksum and extents are
/// valid. Returns nothing when no intact directory survives.
std::optional<Recovery> recover(const ByteSource& source);

}  // namespace cio::archive
