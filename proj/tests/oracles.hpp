// Test-side reference implementations, deliberately independent of the
// library code they check.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace oracle {

// Bit-serial CRC-32 shift register: poly 0x04C11DB7, init 0xFFFFFFFF,
// MSB first, no reflection, no final XOR.
inline uint32_t crc32_bitwise(std::span<const uint8_t> data) {
    uint32_t crc = 0xFFFFFFFFu;
    for (uint8_t byte : data) {
        for (int b = 7; b >= 0; --b) {
            uint32_t bit = (byte >> b) & 1u;
            uint32_t msb = (crc >> 31) & 1u;
            crc <<= 1;
            if (msb ^ bit)
                crc ^= 0x04C11DB7u;
        }
    }
    return crc;
}

// Minimal packet model for the continuity rule.
struct CcPacket {
    uint8_t cc = 0;
    bool has_payload = true;        // afc 1 or 3
    bool discontinuity = false;     // adaptation discontinuity_indicator
};

enum class CcVerdict { Ok, Discontinuity, ExcessDuplicate };

// Straight transcription of the counter rule: +1 mod 16 per payload
// packet, adaptation-only packets skipped, one duplicate tolerated, a
// discontinuity flag suppresses the next comparison.
inline std::vector<std::pair<size_t, CcVerdict>> cc_simulate(std::span<const CcPacket> packets) {
    std::vector<std::pair<size_t, CcVerdict>> verdicts;
    bool have_prev = false;
    uint8_t prev = 0;
    bool dup_used = false;
    bool skip_next = false;
    for (size_t i = 0; i < packets.size(); ++i) {
        const CcPacket& p = packets[i];
        if (p.discontinuity)
            skip_next = true;
        if (!p.has_payload)
            continue;
        if (!have_prev) {
            have_prev = true;
            prev = p.cc;
            skip_next = false;
            continue;
        }
        if (skip_next) {
            skip_next = false;
            prev = p.cc;
            dup_used = false;
            continue;
        }
        if (p.cc == ((prev + 1) & 0x0F)) {
            prev = p.cc;
            dup_used = false;
        } else if (p.cc == prev) {
            if (dup_used)
                verdicts.emplace_back(i, CcVerdict::ExcessDuplicate);
            else
                dup_used = true;
        } else {
            verdicts.emplace_back(i, CcVerdict::Discontinuity);
            prev = p.cc;
            dup_used = false;
        }
    }
    return verdicts;
}

// Exhaustive scan: smallest offset at which 0x47 repeats for `probe`
// frames at the given period.
inline std::optional<size_t> brute_scan(std::span<const uint8_t> data, size_t period,
                                        int probe) {
    if (data.size() < period)
        return std::nullopt;
    for (size_t offset = 0; offset + period <= data.size(); ++offset) {
        bool ok = true;
        for (int k = 0; k < probe; ++k) {
            size_t pos = offset + static_cast<size_t>(k) * period;
            if (pos >= data.size() || data[pos] != 0x47) {
                ok = false;
                break;
            }
        }
        if (ok)
            return offset;
    }
    return std::nullopt;
}

} // namespace oracle
