#include "tskit/packet.hpp"

#include "tskit/errors.hpp"

#include <algorithm>

namespace tskit {

double pcr_to_seconds(const Pcr& pcr) {
    return static_cast<double>(pcr.value()) / static_cast<double>(kPcrTicksPerSecond);
}

namespace {

Pcr parse_pcr(std::span<const uint8_t> b) {
    // 33-bit base, 6 reserved bits, 9-bit extension packed into 6 bytes.
    Pcr pcr;
    pcr.base = (uint64_t{b[0]} << 25) | (uint64_t{b[1]} << 17) | (uint64_t{b[2]} << 9) |
               (uint64_t{b[3]} << 1) | (uint64_t{b[4]} >> 7);
    pcr.extension = static_cast<uint16_t>(((b[4] & 0x01u) << 8) | b[5]);
    return pcr;
}

void encode_pcr(const Pcr& pcr, uint8_t* out) {
    out[0] = static_cast<uint8_t>(pcr.base >> 25);
    out[1] = static_cast<uint8_t>(pcr.base >> 17);
    out[2] = static_cast<uint8_t>(pcr.base >> 9);
    out[3] = static_cast<uint8_t>(pcr.base >> 1);
    out[4] = static_cast<uint8_t>(((pcr.base & 1u) << 7) | 0x7E | (pcr.extension >> 8));
    out[5] = static_cast<uint8_t>(pcr.extension & 0xFF);
}

} // namespace

AdaptationField parse_adaptation_field(std::span<const uint8_t> bytes) {
    if (bytes.empty())
        raise(Errc::malformed_adaptation, "adaptation field length byte missing");

    AdaptationField field;
    field.length = bytes[0];
    if (field.length == 0)
        return field;
    if (field.length + 1u > bytes.size())
        raise(Errc::malformed_adaptation, "adaptation length exceeds remaining bytes");

    std::span<const uint8_t> body = bytes.subspan(1, field.length);
    uint8_t flags = body[0];
    field.discontinuity_indicator = (flags & 0x80) != 0;
    size_t pos = 1;

    auto need = [&](size_t n, const char* what) {
        if (pos + n > body.size())
            raise(Errc::malformed_adaptation, std::string("truncated ") + what);
    };

    if (flags & 0x10) { // PCR
        need(6, "PCR");
        field.pcr = parse_pcr(body.subspan(pos, 6));
        pos += 6;
    }
    if (flags & 0x08) { // OPCR, skipped
        need(6, "OPCR");
        pos += 6;
    }
    if (flags & 0x04) { // splice countdown
        need(1, "splice countdown");
        pos += 1;
    }
    if (flags & 0x02) { // transport private data
        need(1, "private data length");
        uint8_t n = body[pos];
        pos += 1;
        need(n, "private data");
        pos += n;
    }
    if (flags & 0x01) { // adaptation extension
        need(1, "extension length");
        uint8_t n = body[pos];
        pos += 1;
        need(n, "extension");
        pos += n;
    }
    field.stuffing_bytes = static_cast<uint8_t>(body.size() - pos);
    return field;
}

TsPacket parse_packet(std::span<const uint8_t> buffer, int packet_size) {
    if (packet_size != kPacketSize && packet_size != kRsPacketSize)
        raise(Errc::bad_config, "packet_size must be 188 or 204");
    if (buffer.size() != static_cast<size_t>(packet_size))
        raise(Errc::bad_config, "buffer length does not match packet_size");
    if (buffer[0] != kSyncByte)
        raise(Errc::sync_byte_mismatch, "first byte is not 0x47");

    TsPacket pkt;
    pkt.transport_error_indicator = (buffer[1] & 0x80) != 0;
    pkt.payload_unit_start_indicator = (buffer[1] & 0x40) != 0;
    pkt.transport_priority = (buffer[1] & 0x20) != 0;
    pkt.pid = static_cast<uint16_t>(((buffer[1] & 0x1F) << 8) | buffer[2]);
    pkt.scrambling_control = static_cast<uint8_t>(buffer[3] >> 6);
    pkt.adaptation_field_control = static_cast<uint8_t>((buffer[3] >> 4) & 0x03);
    pkt.continuity_counter = static_cast<uint8_t>(buffer[3] & 0x0F);

    size_t pos = 4;
    const size_t end = kPacketSize; // parity bytes of 204-byte frames ignored

    if (pkt.adaptation_field_control == 2 || pkt.adaptation_field_control == 3) {
        AdaptationField field = parse_adaptation_field(buffer.subspan(pos, end - pos));
        pos += 1 + field.length;
        pkt.adaptation = field;
    }
    if (pkt.has_payload())
        pkt.payload.assign(buffer.begin() + pos, buffer.begin() + end);
    return pkt;
}

std::array<uint8_t, kPacketSize> encode_packet(const TsPacket& packet) {
    std::array<uint8_t, kPacketSize> out{};
    out[0] = kSyncByte;
    out[1] = static_cast<uint8_t>((packet.transport_error_indicator ? 0x80 : 0) |
                                  (packet.payload_unit_start_indicator ? 0x40 : 0) |
                                  (packet.transport_priority ? 0x20 : 0) |
                                  ((packet.pid >> 8) & 0x1F));
    out[2] = static_cast<uint8_t>(packet.pid & 0xFF);
    out[3] = static_cast<uint8_t>((packet.scrambling_control << 6) |
                                  (packet.adaptation_field_control << 4) |
                                  (packet.continuity_counter & 0x0F));

    size_t pos = 4;
    bool want_af = packet.adaptation_field_control == 2 || packet.adaptation_field_control == 3;
    if (want_af != packet.adaptation.has_value())
        raise(Errc::malformed_adaptation, "adaptation presence inconsistent with afc");

    if (packet.adaptation) {
        const AdaptationField& af = *packet.adaptation;
        size_t expected = af.length == 0 ? 0 : 1u + (af.pcr ? 6u : 0u) + af.stuffing_bytes;
        if (af.length != expected)
            raise(Errc::malformed_adaptation, "adaptation length inconsistent with contents");
        out[pos++] = af.length;
        if (af.length > 0) {
            out[pos++] = static_cast<uint8_t>((af.discontinuity_indicator ? 0x80 : 0) |
                                              (af.pcr ? 0x10 : 0));
            if (af.pcr) {
                encode_pcr(*af.pcr, &out[pos]);
                pos += 6;
            }
            std::fill_n(out.begin() + pos, af.stuffing_bytes, 0xFF);
            pos += af.stuffing_bytes;
        }
    }

    size_t room = kPacketSize - pos;
    if (packet.has_payload()) {
        if (packet.payload.size() != room)
            raise(Errc::malformed_adaptation, "payload does not fill packet exactly");
        std::copy(packet.payload.begin(), packet.payload.end(), out.begin() + pos);
    } else if (room != 0) {
        raise(Errc::malformed_adaptation, "adaptation does not fill packet exactly");
    }
    return out;
}

namespace {

bool confirm_period(std::span<const uint8_t> stream, size_t offset, int size, int probe) {
    for (int k = 0; k < probe; ++k) {
        size_t pos = offset + static_cast<size_t>(k) * size;
        if (pos >= stream.size() || stream[pos] != kSyncByte)
            return false;
    }
    return true;
}

} // namespace

FrameAlignment resync(std::span<const uint8_t> stream, int probe_window) {
    if (probe_window < 1)
        raise(Errc::bad_config, "probe_window must be >= 1");
    size_t min_bytes = static_cast<size_t>(probe_window) * kRsPacketSize + kRsPacketSize;
    if (stream.size() < min_bytes)
        raise(Errc::need_more_data, "stream too short for sync probe");

    // Search region: every offset that still leaves room for the probe at
    // period 188 (the shorter requirement of the two frame sizes).
    size_t last = stream.size() - static_cast<size_t>(probe_window) * kPacketSize;
    for (size_t offset = 0; offset <= last; ++offset) {
        if (stream[offset] != kSyncByte)
            continue;
        if (confirm_period(stream, offset, kPacketSize, probe_window))
            return {offset, kPacketSize};
        if (confirm_period(stream, offset, kRsPacketSize, probe_window))
            return {offset, kRsPacketSize};
    }
    raise(Errc::no_sync_found, "no periodic sync byte in searched region");
}

std::optional<size_t> resync_at_size(std::span<const uint8_t> stream, int packet_size,
                                     int probe_window) {
    if (stream.size() < static_cast<size_t>(packet_size))
        return std::nullopt;
    size_t last = stream.size() - packet_size;
    for (size_t offset = 0; offset <= last; ++offset) {
        // Use as many frames as actually fit, so short tails still lock.
        int frames_avail = static_cast<int>((stream.size() - offset) / packet_size);
        int probe = std::clamp(frames_avail, 1, probe_window);
        if (stream[offset] == kSyncByte && confirm_period(stream, offset, packet_size, probe))
            return offset;
    }
    return std::nullopt;
}

} // namespace tskit
