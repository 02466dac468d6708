#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace tskit {

constexpr uint8_t kSyncByte = 0x47;
constexpr int kPacketSize = 188;
constexpr int kRsPacketSize = 204; // 188 payload + 16 RS parity bytes
constexpr uint16_t kNullPid = 0x1FFF;
constexpr uint16_t kMaxPid = 0x1FFF;

/// Program clock reference: 33-bit base at 90 kHz plus 9-bit extension
/// at 27 MHz. value() is the combined 27 MHz tick count.
struct Pcr {
    uint64_t base = 0;      // 33 bits, 1/90000 s units
    uint16_t extension = 0; // 9 bits, 1/27000000 s units, < 300

    uint64_t value() const { return base * 300 + extension; }

    bool operator==(const Pcr&) const = default;
};

/// 27 MHz ticks to seconds.
double pcr_to_seconds(const Pcr& pcr);

constexpr uint64_t kPcrTicksPerSecond = 27000000;
constexpr uint64_t kPcrWrap = (uint64_t{1} << 33) * 300; // base wraps every ~26.5 h

struct AdaptationField {
    uint8_t length = 0; // value of the adaptation_field_length byte (0..183)
    bool discontinuity_indicator = false;
    std::optional<Pcr> pcr;
    uint8_t stuffing_bytes = 0;

    bool operator==(const AdaptationField&) const = default;
};

/// One decoded 188-byte transport packet. Header(4) + adaptation + payload
/// always account for exactly 188 bytes.
struct TsPacket {
    uint16_t pid = 0;
    bool transport_error_indicator = false;
    bool payload_unit_start_indicator = false;
    bool transport_priority = false;
    uint8_t scrambling_control = 0;       // 2 bits
    uint8_t adaptation_field_control = 1; // 1=payload, 2=adaptation, 3=both, 0=reserved
    uint8_t continuity_counter = 0;       // 4 bits
    std::optional<AdaptationField> adaptation;
    std::vector<uint8_t> payload;

    bool has_payload() const {
        return adaptation_field_control == 1 || adaptation_field_control == 3;
    }

    bool operator==(const TsPacket&) const = default;
};

struct FrameAlignment {
    size_t offset = 0;
    int packet_size = kPacketSize; // 188 or 204

    bool operator==(const FrameAlignment&) const = default;
};

/// Decodes one transport packet. `buffer` must hold exactly packet_size
/// bytes; for 204-byte frames the trailing 16 parity bytes are ignored.
/// Throws Errc::sync_byte_mismatch / Errc::malformed_adaptation.
TsPacket parse_packet(std::span<const uint8_t> buffer, int packet_size = kPacketSize);

/// Decodes an adaptation field starting at its length byte. Unknown
/// optional sub-fields are skipped via their length bytes; whatever
/// remains inside the declared length counts as stuffing.
AdaptationField parse_adaptation_field(std::span<const uint8_t> bytes);

/// Canonical re-encoding of a parsed packet (header, adaptation with
/// 0xFF stuffing, payload). The adaptation length must be consistent
/// with its parts: length == 1 + 6*(pcr present) + stuffing_bytes.
std::array<uint8_t, kPacketSize> encode_packet(const TsPacket& packet);

/// Finds the smallest offset where 0x47 recurs for `probe_window`
/// consecutive frames at period 188 (preferred) or 204. When fewer
/// bytes are available than the probe needs, throws Errc::need_more_data;
/// when no offset matches, Errc::no_sync_found.
FrameAlignment resync(std::span<const uint8_t> stream, int probe_window = 5);

/// resync constrained to one known frame size; used for mid-stream
/// recovery after a sync loss.
std::optional<size_t> resync_at_size(std::span<const uint8_t> stream, int packet_size,
                                     int probe_window = 5);

} // namespace tskit
