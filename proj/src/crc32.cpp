#include "cio/crc32.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

namespace cio {

std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> data) {
  uLong c = crc;
  while (!data.empty()) {
    const std::size_t n = std::min<std::size_t>(data.size(), std::numeric_limits<uInt>::max());
    c = ::crc32(c, data.data(), static_cast<uInt>(n));
    data = data.subspan(n);
  }
  return static_cast<std::uint32_t>(c);
}

std::uint32_t crc32(std::span<const std::uint8_t> data) { return crc32_update(0, data); }

}  // namespace cio
