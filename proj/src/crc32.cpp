#include "tskit/crc32.hpp"

#include <array>

namespace tskit {

namespace {

constexpr std::array<uint32_t, 256> make_table() {
    std::array<uint32_t, 256> table{};
    for (uint32_t i = 0; i < 256; ++i) {
        uint32_t crc = i << 24;
        for (int b = 0; b < 8; ++b)
            crc = (crc & 0x80000000u) ? (crc << 1) ^ 0x04C11DB7u : crc << 1;
        table[i] = crc;
    }
    return table;
}

constexpr auto kTable = make_table();

} // namespace

uint32_t crc32_mpeg(std::span<const uint8_t> data) {
    uint32_t crc = 0xFFFFFFFFu;
    for (uint8_t byte : data)
        crc = (crc << 8) ^ kTable[(crc >> 24) ^ byte];
    return crc;
}

} // namespace tskit
