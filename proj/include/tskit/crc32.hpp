#pragma once

#include <cstdint>
#include <span>

namespace tskit {

/// CRC-32 as used by PSI/SI sections: polynomial 0x04C11DB7, initial
/// value 0xFFFFFFFF, MSB first, no reflection, no final XOR. A valid
/// section including its trailing CRC hashes to 0.
uint32_t crc32_mpeg(std::span<const uint8_t> data);

} // namespace tskit
