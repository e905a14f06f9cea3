#pragma once

#include <cstdint>
#include <span>

namespace cio {

/// CRC-32/ISO-HDLC (reflected 0xEDB88320, init and final xor 0xFFFFFFFF).
std::uint32_t crc32(std::span<const std::uint8_t> data);
/// Continues a running checksum; start from 0.
std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> data);

}  // namespace cio
