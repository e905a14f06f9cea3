#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "cio/archive.hpp"
#include "cio/crc32.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cio;
using namespace cio::archive;

namespace {

Bytes bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

// Bit-at-a-time reflected CRC-32, independent of zlib.
std::uint32_t crc_oracle(const Bytes& data) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : data) {
    crc ^= b;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return crc ^ 0xFFFFFFFFu;
}

std::uint64_t le(const Bytes& b, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
  return v;
}

// Reparses a whole archive image from scratch and returns path -> member bytes.
std::vector<std::pair<std::string, Bytes>> full_scan(const Bytes& file) {
  REQUIRE(file.size() >= 24);
  REQUIRE(std::string(file.begin(), file.begin() + 8) == "CIOARCH1");
  const std::size_t foot = file.size() - 16;
  std::size_t pos = le(file, foot, 8);
  const auto count = le(file, foot + 8, 4);
  std::vector<std::pair<std::string, Bytes>> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = le(file, pos, 4);
    std::string path(file.begin() + static_cast<long>(pos + 4), file.begin() + static_cast<long>(pos + 4 + len));
    pos += 4 + len;
    const auto off = le(file, pos, 8);
    const auto size = le(file, pos + 8, 8);
    pos += 20;
    out.emplace_back(path, Bytes(file.begin() + static_cast<long>(off), file.begin() + static_cast<long>(off + size)));
  }
  CHECK(pos == foot);
  return out;
}

Bytes build(const std::vector<std::pair<std::string, Bytes>>& members) {
  auto w = create_archive(std::make_unique<MemorySink>());
  for (const auto& [p, b] : members) w.append_member(p, b);
  w.finalize();
  return static_cast<MemorySink&>(w.sink()).take();
}

class ReadOnlySink final : public ByteSink {
 public:
  void write_at(std::uint64_t, std::span<const std::uint8_t>) override {
    throw Error(ErrorCode::io, "read-only sink");
  }
  void truncate(std::uint64_t) override { throw Error(ErrorCode::io, "read-only sink"); }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::runtime;
}

}  // namespace

TEST_CASE("crc32 agrees with a bitwise oracle") {
  std::mt19937_64 rng(7);
  CHECK(crc32(Bytes{}) == 0u);
  CHECK(crc32(bytes("123456789")) == 0xCBF43926u);
  for (int i = 0; i < 50; ++i) {
    auto b = test::random_bytes(rng, rng() % 3000);
    CHECK(crc32(b) == crc_oracle(b));
  }
}

TEST_CASE("empty archive layout") {
  const Bytes f = build({});
  REQUIRE(f.size() == 24);
  CHECK(std::string(f.begin(), f.begin() + 8) == "CIOARCH1");
  CHECK(le(f, 8, 8) == 8);
  CHECK(le(f, 16, 4) == 0);
  CHECK(le(f, 20, 4) == crc_oracle({}));
  MemorySource src(f);
  CHECK(open_archive(src).entries().empty());
}

TEST_CASE("member offsets and checksums") {
  auto w = create_archive(std::make_unique<MemorySink>());
  auto a = w.append_member("a", bytes("hello"));
  auto b = w.append_member("dir/b", bytes("abc"));
  auto c = w.append_member("empty", {});
  CHECK(a.offset == 8);
  CHECK(a.size == 5);
  CHECK(b.offset == 13);
  CHECK(c.crc32 == 0u);
  CHECK(code_of([&] { w.append_member("a", bytes("x")); }) == ErrorCode::exists);
  w.finalize();
  CHECK(code_of([&] { w.finalize(); }) == ErrorCode::finalized);
  CHECK(code_of([&] { w.append_member("z", bytes("x")); }) == ErrorCode::finalized);

  const Bytes f = static_cast<MemorySink&>(w.sink()).bytes();
  const std::uint64_t expect = 8 + (5 + 3 + 0) + (4 + 1 + 20) + (4 + 5 + 20) + (4 + 5 + 20) + 16;
  CHECK(f.size() == expect);
  CHECK(encoded_size(w.entries()) == expect);
  MemorySource src(f);
  CHECK(open_archive(src).list_members() == std::vector<std::string>{"a", "dir/b", "empty"});
}

TEST_CASE("member path validation") {
  auto w = create_archive(std::make_unique<MemorySink>());
  CHECK(code_of([&] { w.append_member("", {}); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { w.append_member("/abs", {}); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { w.append_member(std::string("a\xff", 2), {}); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { w.append_member(std::string(70000, 'x'), {}); }) == ErrorCode::invalid_argument);
  CHECK_NOTHROW(w.append_member("d\xc3\xa9j\xc3\xa0/vu", {}));
  CHECK_NOTHROW(w.append_member(std::string(65535, 'y'), {}));
}

TEST_CASE("read-only sink and foreign files") {
  CHECK(code_of([] { create_archive(std::make_unique<ReadOnlySink>()); }) == ErrorCode::io);
  Bytes junk = bytes("NOTANARCHIVE-but-long-enough-to-have-a-footer");
  MemorySource s1(junk);
  CHECK(code_of([&] { open_archive(s1); }) == ErrorCode::not_an_archive);
  Bytes tiny = bytes("CIO");
  MemorySource s2(tiny);
  CHECK(code_of([&] { open_archive(s2); }) == ErrorCode::not_an_archive);
}

TEST_CASE("open and extract use bounded ranged reads") {
  std::mt19937_64 rng(3);
  std::vector<std::pair<std::string, Bytes>> members;
  for (int i = 0; i < 20; ++i) members.emplace_back("m" + std::to_string(i), test::random_bytes(rng, 5000));
  const Bytes f = build(members);
  MemorySource src(f);
  auto r = open_archive(src);
  const std::uint64_t dir_bytes = f.size() - 16 - r.footer().directory_offset;
  // magic probe, footer, directory extent; never member bytes
  CHECK(src.reads() == 3);
  CHECK(src.bytes_read() == 8 + 16 + dir_bytes);
  const auto before = src.reads();
  CHECK(r.extract_member("m7") == members[7].second);
  CHECK(src.reads() == before + 1);
  CHECK(code_of([&] { r.extract_member("nope"); }) == ErrorCode::not_found);
}

TEST_CASE("randomized round trip against a full-scan oracle") {
  std::mt19937_64 rng(11);
  std::vector<std::pair<std::string, Bytes>> members;
  for (int i = 0; i < 1000; ++i) {
    std::size_t n = rng() % 4 == 0 ? 0 : rng() % 2048;
    members.emplace_back("d" + std::to_string(rng() % 17) + "/f" + std::to_string(i), test::random_bytes(rng, n));
  }
  const Bytes f = build(members);
  const auto scanned = full_scan(f);
  REQUIRE(scanned.size() == members.size());
  MemorySource src(f);
  auto r = open_archive(src);
  for (std::size_t i = 0; i < members.size(); ++i) {
    CHECK(scanned[i] == members[i]);
    CHECK(r.extract_member(members[i].first) == scanned[i].second);
    CHECK(r.entries()[i].crc32 == crc_oracle(members[i].second));
  }
  for (const auto& s : r.verify()) CHECK(s.ok);
}

TEST_CASE("corruption inside one member is isolated") {
  std::mt19937_64 rng(5);
  std::vector<std::pair<std::string, Bytes>> members;
  for (int i = 0; i < 12; ++i) members.emplace_back("x" + std::to_string(i), test::random_bytes(rng, 64 + rng() % 256));
  const Bytes good = build(members);
  for (std::size_t k = 0; k < members.size(); ++k) {
    Bytes bad = good;
    MemorySource gs(good);
    const auto& e = open_archive(gs).entries()[k];
    bad[e.offset + rng() % e.size] ^= 0x40;
    MemorySource bs(bad);
    auto r = open_archive(bs);
    const auto status = r.verify();
    for (std::size_t j = 0; j < status.size(); ++j) CHECK(status[j].ok == (j != k));
    CHECK(code_of([&] { r.extract_member(members[k].first); }) == ErrorCode::corrupt);
    CHECK(r.extract_member(members[(k + 1) % members.size()].first) == members[(k + 1) % members.size()].second);
  }
}

TEST_CASE("directory or footer damage is reported as corrupt") {
  const Bytes good = build({{"a", bytes("one")}, {"b", bytes("two")}});
  MemorySource gs(good);
  const auto dir_off = open_archive(gs).footer().directory_offset;
  for (std::size_t at = dir_off; at < good.size(); ++at) {
    Bytes bad = good;
    bad[at] ^= 0x01;
    MemorySource bs(bad);
    CHECK(code_of([&] { open_archive(bs); }) == ErrorCode::corrupt);
  }
}

TEST_CASE("append preserves the prefix") {
  const std::vector<std::pair<std::string, Bytes>> two{{"a", bytes("alpha")}, {"b", bytes("bravo!")}};
  const Bytes original = build(two);
  MemorySource os(original);
  const auto old_dir = open_archive(os).footer().directory_offset;

  SUBCASE("one member") {
    auto w = append_to_existing(std::make_unique<MemorySink>(original), os);
    w.append_member("c", bytes("charlie"));
    w.finalize();
    const Bytes f = static_cast<MemorySink&>(w.sink()).bytes();
    CHECK(std::equal(original.begin(), original.begin() + static_cast<long>(old_dir), f.begin()));
    MemorySource fs(f);
    auto r = open_archive(fs);
    CHECK(r.list_members() == std::vector<std::string>{"a", "b", "c"});
    CHECK(r.extract_member("c") == bytes("charlie"));
    CHECK(f == build({two[0], two[1], {"c", bytes("charlie")}}));
  }
  SUBCASE("zero members") {
    auto w = append_to_existing(std::make_unique<MemorySink>(original), os);
    w.finalize();
    CHECK(static_cast<MemorySink&>(w.sink()).bytes() == original);
  }
  SUBCASE("duplicate path rejected") {
    auto w = append_to_existing(std::make_unique<MemorySink>(original), os);
    CHECK(code_of([&] { w.append_member("a", bytes("again")); }) == ErrorCode::exists);
  }
  SUBCASE("a shorter rewrite truncates stale bytes") {
    const Bytes bigdir = build({{"a-much-longer-name-for-member", bytes("1")}});
    MemorySource bs(bigdir);
    auto w = append_to_existing(std::make_unique<MemorySink>(bigdir), bs);
    w.finalize();
    CHECK(static_cast<MemorySink&>(w.sink()).bytes() == bigdir);
  }
}

TEST_CASE("crash during append leaves a cleanly detectable, recoverable file") {
  const Bytes base = build({{"a", bytes("alpha")}, {"b", bytes("bravo")}});
  MemorySource bs(base);
  const auto old_dir = open_archive(bs).footer().directory_offset;
  auto w = append_to_existing(std::make_unique<MemorySink>(base), bs);
  w.append_member("c", Bytes(40, 'c'));
  w.finalize();
  const Bytes full = static_cast<MemorySink&>(w.sink()).bytes();
  MemorySource fsrc(full);
  const auto new_dir = open_archive(fsrc).footer().directory_offset;

  // Any prefix cut short of the final footer fails to open as corrupt (or too
  // short) and never silently misreports members.
  for (std::uint64_t cut = 24; cut < full.size(); ++cut) {
    Bytes t(full.begin(), full.begin() + static_cast<long>(cut));
    MemorySource ts(t);
    const auto c = code_of([&] { open_archive(ts); });
    CHECK((c == ErrorCode::corrupt || c == ErrorCode::not_an_archive));
    auto rec = recover(ts);
    if (rec) {
      // Whatever is recovered must be an intact, self-consistent archive.
      Bytes prefix(t.begin(), t.begin() + static_cast<long>(rec->valid_length));
      MemorySource ps(prefix);
      auto r = open_archive(ps);
      for (const auto& s : r.verify()) CHECK(s.ok);
    }
  }
  // Cut after the new member bytes but before the new directory: the member
  // bytes overwrote the old directory, so no intact footer survives.
  {
    Bytes t(full.begin(), full.begin() + static_cast<long>(new_dir));
    MemorySource ts(t);
    CHECK(code_of([&] { open_archive(ts); }) == ErrorCode::corrupt);
    CHECK_FALSE(recover(ts).has_value());
  }
  // Trailing garbage after a complete archive: the archive is found again.
  {
    Bytes t = full;
    t.insert(t.end(), {1, 2, 3, 4, 5, 6, 7});
    MemorySource ts(t);
    auto rec = recover(ts);
    REQUIRE(rec.has_value());
    CHECK(rec->valid_length == full.size());
    CHECK(rec->entries.size() == 3);
  }
  CHECK(old_dir == 8 + 10);
}

TEST_CASE("file-backed archive create, append and reopen") {
  test::TempDir dir;
  const auto path = dir.path() / "x.cioa";
  {
    auto w = create_archive(path);
    w.append_member("one", bytes("1"));
    w.finalize();
  }
  {
    auto w = append_to_existing(path);
    w.append_member("two", bytes("22"));
    w.finalize();
  }
  FileSource src(path);
  auto r = open_archive(src);
  CHECK(r.list_members() == std::vector<std::string>{"one", "two"});
  CHECK(r.extract_member("two") == bytes("22"));
  CHECK(std::filesystem::file_size(path) == encoded_size(r.entries()));
}
