#include "tskit/genstream.hpp"

#include "tskit/crc32.hpp"
#include "tskit/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

namespace tskit {

using nlohmann::json;

const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::CcGap: return "cc_gap";
    case ErrorKind::CcDuplicate: return "cc_duplicate";
    case ErrorKind::TeiFlag: return "tei_flag";
    case ErrorKind::SyncCorrupt: return "sync_corrupt";
    case ErrorKind::CrcCorrupt: return "crc_corrupt";
    }
    return "?";
}

namespace {

constexpr uint64_t kTicksPerMs = kPcrTicksPerSecond / 1000;
constexpr uint64_t kPcrIntervalTicks = 40 * kTicksPerMs; // PCR at least every 40 ms

uint8_t stream_id_for(uint8_t stream_type) {
    switch (class_for_stream_type(stream_type)) {
    case PidClassKind::Video: return 0xE0;
    case PidClassKind::Audio: return 0xC0;
    default: return 0xBD; // private_stream_1
    }
}

size_t packets_for_section(size_t section_bytes) {
    // first packet: pointer byte + 183 section bytes, then 184 per packet
    if (section_bytes <= 183)
        return 1;
    return 1 + (section_bytes - 183 + 183) / 184; // 1 + ceil((n-183)/184)
}

std::vector<uint8_t> seeded_bytes(uint64_t seed, size_t count) {
    std::mt19937_64 rng(seed);
    std::vector<uint8_t> out(count);
    uint64_t word = 0;
    for (size_t i = 0; i < count; ++i) {
        if (i % 8 == 0)
            word = rng();
        out[i] = static_cast<uint8_t>(word >> ((i % 8) * 8));
        if (out[i] == 0xFF)
            out[i] = 0xFE; // keep raw table bodies free of stuffing bytes
    }
    return out;
}

struct EsState {
    EsSpec spec;
    uint8_t cc = 0;
    int64_t owed_units = 0; // bytes scaled by the mux bitrate
    std::vector<uint8_t> unit;
    size_t offset = 0;
    std::mt19937_64 rng;
    uint64_t pes_complete = 0;
    uint64_t es_payload_bytes = 0;

    void next_unit() {
        const size_t k = spec.pes_payload_bytes;
        unit.clear();
        unit.reserve(9 + k);
        uint16_t declared = static_cast<uint16_t>(3 + k);
        unit.push_back(0x00);
        unit.push_back(0x00);
        unit.push_back(0x01);
        unit.push_back(stream_id_for(spec.stream_type));
        unit.push_back(static_cast<uint8_t>(declared >> 8));
        unit.push_back(static_cast<uint8_t>(declared & 0xFF));
        unit.push_back(0x80); // marker bits, no flags
        unit.push_back(0x00);
        unit.push_back(0x00); // PES_header_data_length
        uint64_t word = 0;
        for (size_t i = 0; i < k; ++i) {
            if (i % 8 == 0)
                word = rng();
            unit.push_back(static_cast<uint8_t>(word >> ((i % 8) * 8)));
        }
        offset = 0;
    }
};

struct PcrSchedule {
    uint16_t pid = 0;
    bool on_pmt_pid = false;
    uint64_t next_tick = 0;
    std::optional<uint64_t> epoch;
};

class Mux {
public:
    Mux(const StreamSpec& spec) : spec_(spec) {
        truth_.packet_size = spec.packet_size;
        truth_.target_bitrate_bps = spec.target_bitrate_bps;
        truth_.duration_ms = spec.duration_ms;

        // signaling inventory, burst order: PAT, PMTs, SI tables
        PatTable pat;
        pat.transport_stream_id = spec.transport_stream_id;
        pat.version = spec.pat_version;
        pat.network_pid = spec.network_pid;
        for (const ProgramSpec& prog : spec.programs) {
            pat.programs.emplace_back(prog.program_number, prog.pmt_pid);
            truth_.programs.emplace_back(prog.program_number, prog.pmt_pid);
        }
        add_table(kPidPat, encode_pat(pat), SiKind::Pat);
        for (const ProgramSpec& prog : spec.programs) {
            PmtTable pmt;
            pmt.program_number = prog.program_number;
            pmt.pcr_pid = prog.pcr_pid;
            for (const EsSpec& es : prog.streams)
                pmt.streams.push_back({es.stream_type, es.pid, es.es_info});
            add_table(prog.pmt_pid, encode_pmt(pmt, prog.pmt_version), SiKind::Pmt);
        }
        for (const SiTableSpec& si : spec.si_tables) {
            std::vector<uint8_t> body = si.body;
            if (body.empty() && si.body_length > 0)
                body = seeded_bytes(spec.seed ^ (uint64_t{si.pid} << 16) ^ si.table_id,
                                    si.body_length);
            std::vector<uint8_t> bytes =
                si.long_form
                    ? encode_long_section(si.table_id, si.table_id_extension, si.version, 0, 0,
                                          body)
                    : encode_short_section(si.table_id, body);
            add_table(si.pid, std::move(bytes), SiKind::Other);
        }

        for (const ProgramSpec& prog : spec.programs) {
            for (const EsSpec& es : prog.streams) {
                bool known = std::any_of(es_.begin(), es_.end(), [&](const EsState& s) {
                    return s.spec.pid == es.pid; // programs may share elementary streams
                });
                if (known)
                    continue;
                EsState state;
                state.spec = es;
                state.rng.seed(spec.seed ^ (uint64_t{es.pid} << 24) ^ 0x9E3779B97F4A7C15ull);
                state.next_unit();
                es_.push_back(std::move(state));
                truth_.classes[es.pid] = {class_for_stream_type(es.stream_type), SiKind::Other};
                truth_.stream_types[es.pid] = es.stream_type;
            }
            bool have = std::any_of(pcr_.begin(), pcr_.end(),
                                    [&](const PcrSchedule& s) { return s.pid == prog.pcr_pid; });
            if (!have)
                pcr_.push_back({prog.pcr_pid, prog.pcr_pid == prog.pmt_pid, 0, std::nullopt});
        }
        if (!spec.programs.empty())
            truth_.pcr_reference_pid = spec.programs.front().pcr_pid;
    }

    Generated run() {
        const uint64_t total = total_packets();
        const uint64_t rep_ticks = uint64_t{spec_.psi_repetition_ms} * kTicksPerMs;
        uint64_t next_psi_tick = 0;

        for (uint64_t i = 0; i < total; ++i) {
            uint64_t ticks = tick_of(i);
            for (EsState& es : es_)
                es.owed_units += int64_t{es.spec.rate_bps} * spec_.packet_size / 8;

            if (psi_queue_.empty() && ticks >= next_psi_tick) {
                enqueue_psi_burst();
                next_psi_tick += rep_ticks;
            }
            if (!psi_queue_.empty()) {
                emit(psi_queue_.front().first, psi_queue_.front().second);
                psi_queue_.pop_front();
                continue;
            }

            PcrSchedule* due = nullptr;
            for (PcrSchedule& sched : pcr_)
                if (ticks >= sched.next_tick && (!due || sched.next_tick < due->next_tick))
                    due = &sched;
            if (due) {
                emit_pcr_packet(*due, ticks);
                due->next_tick = ticks + kPcrIntervalTicks;
                continue;
            }

            EsState* pick = nullptr;
            for (EsState& es : es_)
                if (es.owed_units >= int64_t{spec_.target_bitrate_bps} &&
                    (!pick || es.owed_units > pick->owed_units))
                    pick = &es;
            if (pick) {
                emit_es_packet(*pick, std::nullopt);
                continue;
            }
            emit_null();
        }

        Generated out;
        out.truth = std::move(truth_);
        for (EsState& es : es_) {
            out.truth.pes_complete[es.spec.pid] = es.pes_complete;
            out.truth.es_payload_bytes[es.spec.pid] = es.es_payload_bytes;
        }
        out.truth.total_packets = packets_emitted_;
        out.bytes = std::move(bytes_);
        return out;
    }

private:
    void add_table(uint16_t pid, std::vector<uint8_t> bytes, SiKind kind_hint) {
        PsiTruthRow row;
        row.pid = pid;
        row.table_id = bytes[0];
        bool long_form = (bytes[1] & 0x80) != 0;
        if (long_form)
            row.version = static_cast<uint8_t>((bytes[5] >> 1) & 0x1F);
        row.section_number = long_form ? bytes[6] : 0;
        row.section_length = static_cast<uint16_t>(((bytes[1] & 0x0F) << 8) | bytes[2]);
        truth_.psi_rows.push_back(row);
        SiKind kind = kind_hint;
        if (kind == SiKind::Other)
            kind = classify_table(pid, bytes[0], {});
        truth_.classes[pid] = {PidClassKind::Psi, kind};
        tables_.emplace_back(pid, std::move(bytes));
    }

    uint64_t total_packets() const {
        unsigned __int128 bytes_total = static_cast<unsigned __int128>(spec_.target_bitrate_bps) *
                                        spec_.duration_ms / 1000 / 8;
        return static_cast<uint64_t>(bytes_total / spec_.packet_size);
    }

    uint64_t tick_of(uint64_t packet_index) const {
        unsigned __int128 bits =
            static_cast<unsigned __int128>(packet_index) * spec_.packet_size * 8;
        return static_cast<uint64_t>(bits * kPcrTicksPerSecond / spec_.target_bitrate_bps);
    }

    void enqueue_psi_burst() {
        for (const auto& [pid, section] : tables_) {
            size_t pos = 0;
            bool first = true;
            while (first || pos < section.size()) {
                TsPacket pkt;
                pkt.pid = pid;
                pkt.payload_unit_start_indicator = first;
                pkt.adaptation_field_control = 1;
                pkt.continuity_counter = next_cc(pid);
                auto& payload = pkt.payload;
                if (first) {
                    payload.push_back(0); // pointer_field
                    first = false;
                }
                size_t take = std::min(section.size() - pos, 184 - payload.size());
                payload.insert(payload.end(), section.begin() + pos, section.begin() + pos + take);
                pos += take;
                payload.resize(184, 0xFF);
                psi_queue_.emplace_back(pid, encode_packet(pkt));
            }
        }
    }

    uint8_t next_cc(uint16_t pid) {
        uint8_t value = cc_[pid];
        cc_[pid] = (value + 1) & 0x0F;
        return value;
    }

    void emit(uint16_t pid, const std::array<uint8_t, kPacketSize>& frame) {
        bytes_.insert(bytes_.end(), frame.begin(), frame.end());
        if (spec_.packet_size == kRsPacketSize)
            bytes_.insert(bytes_.end(), 16, 0x00); // zeroed parity placeholder
        truth_.packet_count[pid] += 1;
        packets_emitted_ += 1;
    }

    void emit_null() {
        TsPacket pkt;
        pkt.pid = kNullPid;
        pkt.adaptation_field_control = 1;
        pkt.continuity_counter = 0;
        pkt.payload.assign(184, 0xFF);
        emit(kNullPid, encode_packet(pkt));
        truth_.classes[kNullPid] = {PidClassKind::Null, SiKind::Other};
    }

    void emit_pcr_packet(PcrSchedule& sched, uint64_t ticks) {
        if (!sched.epoch)
            sched.epoch = ticks;
        uint64_t value = ticks - *sched.epoch;
        Pcr pcr{value / 300, static_cast<uint16_t>(value % 300)};
        truth_.pcr_packets += 1;
        if (sched.on_pmt_pid) {
            TsPacket pkt;
            pkt.pid = sched.pid;
            pkt.adaptation_field_control = 2; // no payload, counter frozen
            pkt.continuity_counter = cc_[sched.pid];
            AdaptationField af;
            af.length = 183;
            af.pcr = pcr;
            af.stuffing_bytes = 183 - 7;
            pkt.adaptation = af;
            emit(sched.pid, encode_packet(pkt));
            return;
        }
        for (EsState& es : es_) {
            if (es.spec.pid == sched.pid) {
                emit_es_packet(es, pcr);
                return;
            }
        }
    }

    void emit_es_packet(EsState& es, std::optional<Pcr> pcr) {
        if (es.offset >= es.unit.size())
            es.next_unit();
        size_t remaining = es.unit.size() - es.offset;
        size_t cap = pcr ? 176 : 184;
        size_t chunk = std::min(cap, remaining);

        TsPacket pkt;
        pkt.pid = es.spec.pid;
        pkt.payload_unit_start_indicator = es.offset == 0;
        pkt.continuity_counter = next_cc(es.spec.pid);
        size_t af_total = 184 - chunk; // header+adaptation+payload == 188
        if (pcr || af_total > 0) {
            AdaptationField af;
            af.length = static_cast<uint8_t>(af_total - 1);
            if (pcr) {
                af.pcr = pcr;
                af.stuffing_bytes = static_cast<uint8_t>(af.length - 7);
            } else if (af.length > 0) {
                af.stuffing_bytes = static_cast<uint8_t>(af.length - 1);
            }
            pkt.adaptation = af;
            pkt.adaptation_field_control = 3;
        } else {
            pkt.adaptation_field_control = 1;
        }
        pkt.payload.assign(es.unit.begin() + es.offset, es.unit.begin() + es.offset + chunk);

        // ledger: payload bytes are the unit bytes past the 9-byte header
        size_t begin = std::max<size_t>(es.offset, 9);
        size_t end = es.offset + chunk;
        if (end > begin)
            es.es_payload_bytes += end - begin;
        es.offset += chunk;
        if (es.offset == es.unit.size())
            es.pes_complete += 1;
        es.owed_units -= int64_t(chunk) * spec_.target_bitrate_bps;

        emit(es.spec.pid, encode_packet(pkt));
    }

    const StreamSpec& spec_;
    GroundTruth truth_;
    std::vector<uint8_t> bytes_;
    std::vector<std::pair<uint16_t, std::vector<uint8_t>>> tables_;
    std::deque<std::pair<uint16_t, std::array<uint8_t, kPacketSize>>> psi_queue_;
    std::vector<EsState> es_;
    std::vector<PcrSchedule> pcr_;
    std::map<uint16_t, uint8_t> cc_;
    uint64_t packets_emitted_ = 0;
};

} // namespace

void validate_spec(const StreamSpec& spec) {
    if (spec.packet_size != kPacketSize && spec.packet_size != kRsPacketSize)
        raise(Errc::bad_config, "packet_size must be 188 or 204");
    if (spec.target_bitrate_bps == 0 || spec.duration_ms == 0)
        raise(Errc::bad_config, "bitrate and duration must be positive");
    if (spec.psi_repetition_ms == 0)
        raise(Errc::bad_config, "psi_repetition_ms must be positive");

    std::set<uint16_t> taken{kPidPat, kNullPid};
    auto claim = [&taken](uint16_t pid, const char* role) {
        if (pid == kPidPat || pid == kNullPid || !taken.insert(pid).second)
            raise(Errc::spec_pid_collision,
                  std::string(role) + " PID " + std::to_string(pid) + " collides");
    };

    std::set<uint16_t> program_numbers;
    for (const SiTableSpec& si : spec.si_tables) {
        if (si.pid != kPidNit && si.pid != kPidSdt && si.pid != kPidEit && si.pid != kPidTdt)
            raise(Errc::spec_pid_collision, "SI tables are limited to PIDs 16/17/18/20");
        taken.insert(si.pid); // several tables may share one signaling PID
    }
    std::map<uint16_t, EsSpec> es_by_pid;
    for (const ProgramSpec& prog : spec.programs) {
        if (prog.program_number == 0)
            raise(Errc::bad_config, "program_number 0 is reserved for the network PID");
        if (!program_numbers.insert(prog.program_number).second)
            raise(Errc::bad_config, "duplicate program_number");
        if (prog.pmt_pid < 0x20)
            raise(Errc::spec_pid_collision, "PMT PID below 0x20");
        claim(prog.pmt_pid, "PMT");
        bool pcr_ok = prog.pcr_pid == prog.pmt_pid;
        std::set<uint16_t> in_program;
        for (const EsSpec& es : prog.streams) {
            if (es.pid < 0x20)
                raise(Errc::spec_pid_collision, "elementary PID below 0x20");
            if (!in_program.insert(es.pid).second)
                raise(Errc::spec_pid_collision, "elementary PID repeated within one program");
            // an elementary stream may appear in several programs, but
            // only as the same stream
            auto [it, fresh] = es_by_pid.emplace(es.pid, es);
            if (fresh)
                claim(es.pid, "elementary");
            else if (!(it->second == es))
                raise(Errc::spec_pid_collision,
                      "elementary PID " + std::to_string(es.pid) + " redeclared differently");
            if (es.pes_payload_bytes < 1 || es.pes_payload_bytes > 60000)
                raise(Errc::bad_config, "pes_payload_bytes out of range");
            if (es.rate_bps == 0)
                raise(Errc::bad_config, "elementary rate must be positive");
            pcr_ok = pcr_ok || es.pid == prog.pcr_pid;
        }
        if (!pcr_ok)
            raise(Errc::bad_config, "pcr_pid must be a stream PID or the pmt_pid");
    }

    // capacity: signaling + elementary + PCR headroom must fit the mux rate
    double budget = static_cast<double>(spec.target_bitrate_bps) / 8.0;
    double need = 0;
    {
        PatTable pat;
        pat.network_pid = spec.network_pid;
        for (const ProgramSpec& prog : spec.programs)
            pat.programs.emplace_back(prog.program_number, prog.pmt_pid);
        size_t burst_packets = packets_for_section(encode_pat(pat).size());
        for (const ProgramSpec& prog : spec.programs) {
            PmtTable pmt;
            pmt.pcr_pid = prog.pcr_pid;
            for (const EsSpec& es : prog.streams)
                pmt.streams.push_back({es.stream_type, es.pid, es.es_info});
            burst_packets += packets_for_section(encode_pmt(pmt, 0).size());
        }
        for (const SiTableSpec& si : spec.si_tables) {
            size_t body = si.body.empty() ? si.body_length : si.body.size();
            burst_packets += packets_for_section((si.long_form ? 12 : 3) + body);
        }
        need += static_cast<double>(burst_packets) * spec.packet_size * 1000.0 /
                spec.psi_repetition_ms;
    }
    std::set<uint16_t> pcr_pids;
    std::set<uint16_t> es_pids;
    for (const ProgramSpec& prog : spec.programs)
        pcr_pids.insert(prog.pcr_pid);
    for (const auto& [pid, es] : es_by_pid) {
        es_pids.insert(pid);
        // each PES unit occupies ceil(unit/184) packets, the last one padded
        double unit_bytes = 9.0 + es.pes_payload_bytes;
        double packets_per_unit = std::ceil(unit_bytes / 184.0);
        double units_per_s = static_cast<double>(es.rate_bps) / 8.0 / unit_bytes;
        need += units_per_s * packets_per_unit * spec.packet_size;
    }
    for (uint16_t pid : pcr_pids) {
        // PCR-only packets on a PMT PID cost a full packet; PCR riding an
        // elementary PID just shrinks one payload per interval
        need += es_pids.count(pid) ? 25.0 * 8.0 : 25.0 * spec.packet_size;
    }
    if (need > budget)
        raise(Errc::spec_over_capacity, "declared content exceeds target bitrate");
}

Generated generate(const StreamSpec& spec) {
    validate_spec(spec);
    Mux mux(spec);
    return mux.run();
}

namespace {

// Mirrors the section framing rules while tracking where each section
// byte sits in the stream, so a CRC byte can be located for corruption.
struct SectionLocator {
    struct Hit {
        uint64_t start_frame = 0;
        uint64_t crc_frame = 0;
        size_t crc_byte_offset = 0; // within the frame
        bool long_form = false;
    };

    size_t pending = 0;      // bytes accumulated of the current section
    size_t total = 0;        // 0 = header not complete yet
    uint8_t head[3] = {};
    uint64_t start_frame = 0;
    bool long_form = false;
    uint64_t last_frame = 0;
    size_t last_offset = 0;
    std::vector<Hit> hits;

    void begin_byte(uint64_t frame, size_t offset, uint8_t byte) {
        if (pending < 3)
            head[pending] = byte;
        if (pending == 0)
            start_frame = frame;
        if (pending == 1)
            long_form = (byte & 0x80) != 0;
        pending += 1;
        if (pending == 3)
            total = 3u + (((head[1] & 0x0F) << 8) | head[2]);
        last_frame = frame;
        last_offset = offset;
        if (total > 0 && pending == total) {
            hits.push_back({start_frame, frame, offset, long_form});
            pending = 0;
            total = 0;
        }
    }

    bool mid() const { return pending > 0; }

    void reset() {
        pending = 0;
        total = 0;
    }
};

} // namespace

Injected inject_errors(std::span<const uint8_t> stream, std::span<const ErrorSpec> errors,
                       int packet_size) {
    if (packet_size != kPacketSize && packet_size != kRsPacketSize)
        raise(Errc::bad_config, "packet_size must be 188 or 204");
    if (stream.size() % packet_size != 0)
        raise(Errc::bad_config, "stream length not a multiple of the packet size");
    const uint64_t frames = stream.size() / packet_size;

    auto frame_bytes = [&](uint64_t f) {
        return stream.subspan(f * packet_size, packet_size);
    };
    auto pid_of = [&](uint64_t f) {
        auto b = frame_bytes(f);
        return static_cast<uint16_t>(((b[1] & 0x1F) << 8) | b[2]);
    };

    std::set<uint64_t> deleted;
    std::set<uint64_t> duplicated;
    std::map<uint64_t, std::vector<std::pair<size_t, uint8_t>>> xor_edits;
    std::vector<InjectionRecord> ledger;

    auto check_index = [&](uint64_t idx) {
        if (idx >= frames)
            raise(Errc::index_out_of_range, "packet index " + std::to_string(idx) +
                                                " beyond stream of " + std::to_string(frames));
    };
    auto check_pid = [&](uint64_t idx, uint16_t want) {
        if (pid_of(idx) != want)
            raise(Errc::bad_config, "packet " + std::to_string(idx) + " is not on PID " +
                                        std::to_string(want));
    };

    for (const ErrorSpec& err : errors) {
        for (uint64_t idx : err.at_packet_indices) {
            check_index(idx);
            switch (err.kind) {
            case ErrorKind::CcGap:
                check_pid(idx, err.pid);
                deleted.insert(idx);
                ledger.push_back({ErrorKind::CcGap, err.pid, idx, "packet removed"});
                break;
            case ErrorKind::CcDuplicate:
                check_pid(idx, err.pid);
                duplicated.insert(idx);
                ledger.push_back({ErrorKind::CcDuplicate, err.pid, idx, "packet tripled"});
                break;
            case ErrorKind::TeiFlag:
                check_pid(idx, err.pid);
                xor_edits[idx].emplace_back(1, 0x80);
                ledger.push_back({ErrorKind::TeiFlag, err.pid, idx, "error indicator set"});
                break;
            case ErrorKind::SyncCorrupt:
                // 0x47 ^ 0xFF = 0xB8: guaranteed not a sync byte
                xor_edits[idx].emplace_back(0, 0xFF);
                ledger.push_back({ErrorKind::SyncCorrupt, pid_of(idx), idx, "sync byte clobbered"});
                break;
            case ErrorKind::CrcCorrupt: {
                // find the first long-form section starting at or after idx
                SectionLocator locator;
                std::optional<SectionLocator::Hit> target;
                for (uint64_t f = 0; f < frames && !target; ++f) {
                    if (pid_of(f) != err.pid)
                        continue;
                    auto b = frame_bytes(f);
                    uint8_t afc = (b[3] >> 4) & 0x03;
                    if (afc != 1 && afc != 3)
                        continue;
                    size_t pos = 4;
                    if (afc == 3)
                        pos += 1u + b[4];
                    if (pos >= kPacketSize)
                        continue;
                    bool pusi = (b[1] & 0x40) != 0;
                    size_t i = pos;
                    if (pusi) {
                        uint8_t pointer = b[i];
                        i += 1;
                        size_t cont_end = std::min<size_t>(i + pointer, kPacketSize);
                        for (; i < cont_end && locator.mid(); ++i)
                            locator.begin_byte(f, i, b[i]);
                        i = cont_end;
                        locator.reset();
                    } else if (!locator.mid()) {
                        continue;
                    }
                    for (; i < kPacketSize; ++i) {
                        if (!locator.mid() && b[i] == 0xFF)
                            break; // stuffing to end of payload
                        locator.begin_byte(f, i, b[i]);
                    }
                    for (const auto& hit : locator.hits)
                        if (hit.long_form && hit.start_frame >= idx) {
                            target = hit;
                            break;
                        }
                    locator.hits.clear();
                }
                if (!target)
                    raise(Errc::index_out_of_range,
                          "no long-form section on PID " + std::to_string(err.pid) +
                              " at or after packet " + std::to_string(idx));
                xor_edits[target->crc_frame].emplace_back(target->crc_byte_offset, 0x01);
                ledger.push_back({ErrorKind::CrcCorrupt, err.pid, target->start_frame,
                                  "section CRC bit flipped"});
                break;
            }
            }
        }
    }

    Injected out;
    out.bytes.reserve(stream.size());
    for (uint64_t f = 0; f < frames; ++f) {
        if (deleted.count(f))
            continue;
        size_t begin = out.bytes.size();
        auto b = frame_bytes(f);
        out.bytes.insert(out.bytes.end(), b.begin(), b.end());
        if (auto it = xor_edits.find(f); it != xor_edits.end())
            for (const auto& [offset, mask] : it->second)
                out.bytes[begin + offset] ^= mask;
        if (duplicated.count(f)) {
            std::vector<uint8_t> copy(out.bytes.begin() + begin, out.bytes.end());
            out.bytes.insert(out.bytes.end(), copy.begin(), copy.end());
            out.bytes.insert(out.bytes.end(), copy.begin(), copy.end());
        }
    }
    out.ledger = std::move(ledger);
    return out;
}

StreamSpec builtin_demo_spec() {
    StreamSpec spec;
    spec.transport_stream_id = 1;
    spec.packet_size = kPacketSize;
    spec.target_bitrate_bps = 2'000'000;
    spec.duration_ms = 1000;
    spec.psi_repetition_ms = 100;
    spec.pat_version = 0;
    spec.network_pid = kPidNit;
    spec.seed = 20030615;

    // 43 bytes of video descriptors pad the PMT to section_length 81
    std::vector<uint8_t> video_info;
    video_info.push_back(0xC0);
    video_info.push_back(41);
    for (int i = 0; i < 41; ++i)
        video_info.push_back(static_cast<uint8_t>(i * 7 + 3));

    ProgramSpec a;
    a.program_number = 4673; // 0x1241
    a.pmt_pid = 268;
    a.pcr_pid = 520;
    a.pmt_version = 0;
    a.streams = {
        {520, 0x02, 1'200'000, 2048, video_info},
        {730, 0x03, 128'000, 512, {}},
        {731, 0x03, 128'000, 512, {}},
        {732, 0x03, 128'000, 512, {}},
        {800, 0x06, 64'000, 256, {}},
    };
    spec.programs.push_back(a);

    // the second program shares the elementary inventory of the first
    ProgramSpec b = a;
    b.program_number = 4481; // 0x1181
    b.pmt_pid = 269;
    b.pmt_version = 9;
    spec.programs.push_back(b);

    spec.si_tables = {
        {kPidNit, kTableIdNit, true, 0, 1, 154, {}},
        {kPidSdt, kTableIdSdt, true, 21, 1, 112, {}},
        {kPidEit, kTableIdEit, true, 3, 0x1241, 273, {}},
        {kPidTdt, kTableIdTdt, false, 0, 0, 9, {}},
    };
    return spec;
}

namespace {

std::string to_hex(std::span<const uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

std::vector<uint8_t> from_hex(const std::string& text) {
    if (text.size() % 2 != 0)
        raise(Errc::bad_config, "odd-length hex string");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        raise(Errc::bad_config, "invalid hex digit");
    };
    std::vector<uint8_t> out(text.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>((nibble(text[2 * i]) << 4) | nibble(text[2 * i + 1]));
    return out;
}

ErrorKind error_kind_from(const std::string& name) {
    if (name == "cc_gap") return ErrorKind::CcGap;
    if (name == "cc_duplicate") return ErrorKind::CcDuplicate;
    if (name == "tei_flag") return ErrorKind::TeiFlag;
    if (name == "sync_corrupt") return ErrorKind::SyncCorrupt;
    if (name == "crc_corrupt") return ErrorKind::CrcCorrupt;
    raise(Errc::bad_config, "unknown error kind: " + name);
}

} // namespace

std::string stream_spec_to_json(const StreamSpec& spec) {
    json j;
    j["transport_stream_id"] = spec.transport_stream_id;
    j["packet_size"] = spec.packet_size;
    j["bitrate_bps"] = spec.target_bitrate_bps;
    j["duration_ms"] = spec.duration_ms;
    j["psi_interval_ms"] = spec.psi_repetition_ms;
    j["pat_version"] = spec.pat_version;
    if (spec.network_pid)
        j["network_pid"] = *spec.network_pid;
    j["seed"] = spec.seed;
    j["programs"] = json::array();
    for (const ProgramSpec& prog : spec.programs) {
        json p;
        p["program_number"] = prog.program_number;
        p["pmt_pid"] = prog.pmt_pid;
        p["pcr_pid"] = prog.pcr_pid;
        p["pmt_version"] = prog.pmt_version;
        p["streams"] = json::array();
        for (const EsSpec& es : prog.streams) {
            json s;
            s["pid"] = es.pid;
            s["stream_type"] = es.stream_type;
            s["rate_bps"] = es.rate_bps;
            s["pes_payload_bytes"] = es.pes_payload_bytes;
            if (!es.es_info.empty())
                s["es_info_hex"] = to_hex(es.es_info);
            p["streams"].push_back(std::move(s));
        }
        j["programs"].push_back(std::move(p));
    }
    j["si_tables"] = json::array();
    for (const SiTableSpec& si : spec.si_tables) {
        json s;
        s["pid"] = si.pid;
        s["table_id"] = si.table_id;
        s["long_form"] = si.long_form;
        s["version"] = si.version;
        s["table_id_extension"] = si.table_id_extension;
        if (!si.body.empty())
            s["body_hex"] = to_hex(si.body);
        else
            s["body_length"] = si.body_length;
        j["si_tables"].push_back(std::move(s));
    }
    j["errors"] = json::array();
    for (const ErrorSpec& err : spec.errors) {
        json e;
        e["kind"] = to_string(err.kind);
        e["pid"] = err.pid;
        e["at"] = err.at_packet_indices;
        j["errors"].push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

StreamSpec stream_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        raise(Errc::bad_config, std::string("spec parse error: ") + e.what());
    }
    try {
        StreamSpec spec;
        spec.transport_stream_id = j.value("transport_stream_id", 1);
        spec.packet_size = j.value("packet_size", kPacketSize);
        spec.target_bitrate_bps = j.value("bitrate_bps", 0u);
        spec.duration_ms = j.value("duration_ms", 0u);
        spec.psi_repetition_ms = j.value("psi_interval_ms", 100u);
        spec.pat_version = j.value("pat_version", 0);
        if (j.contains("network_pid"))
            spec.network_pid = j["network_pid"].get<uint16_t>();
        spec.seed = j.value("seed", 0ull);
        for (const json& p : j.value("programs", json::array())) {
            ProgramSpec prog;
            prog.program_number = p.at("program_number").get<uint16_t>();
            prog.pmt_pid = p.at("pmt_pid").get<uint16_t>();
            prog.pcr_pid = p.at("pcr_pid").get<uint16_t>();
            prog.pmt_version = p.value("pmt_version", 0);
            for (const json& s : p.value("streams", json::array())) {
                EsSpec es;
                es.pid = s.at("pid").get<uint16_t>();
                es.stream_type = s.at("stream_type").get<uint8_t>();
                es.rate_bps = s.at("rate_bps").get<uint32_t>();
                es.pes_payload_bytes = s.at("pes_payload_bytes").get<uint32_t>();
                if (s.contains("es_info_hex"))
                    es.es_info = from_hex(s["es_info_hex"].get<std::string>());
                prog.streams.push_back(std::move(es));
            }
            spec.programs.push_back(std::move(prog));
        }
        for (const json& s : j.value("si_tables", json::array())) {
            SiTableSpec si;
            si.pid = s.at("pid").get<uint16_t>();
            si.table_id = s.at("table_id").get<uint8_t>();
            si.long_form = s.value("long_form", true);
            si.version = s.value("version", 0);
            si.table_id_extension = s.value("table_id_extension", 1);
            if (s.contains("body_hex"))
                si.body = from_hex(s["body_hex"].get<std::string>());
            else
                si.body_length = s.value("body_length", 0);
            spec.si_tables.push_back(std::move(si));
        }
        for (const json& e : j.value("errors", json::array())) {
            ErrorSpec err;
            err.kind = error_kind_from(e.at("kind").get<std::string>());
            err.pid = e.value("pid", 0);
            err.at_packet_indices = e.value("at", std::vector<uint64_t>{});
            spec.errors.push_back(std::move(err));
        }
        return spec;
    } catch (const json::exception& e) {
        raise(Errc::bad_config, std::string("spec field error: ") + e.what());
    }
}

StreamSpec load_stream_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        raise(Errc::source_unavailable, "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return stream_spec_from_json(buffer.str());
}

void save_stream_spec(const StreamSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        raise(Errc::sink_write_failure, "cannot open " + path.string());
    out << stream_spec_to_json(spec);
}

} // namespace tskit
