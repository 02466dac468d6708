#include "tskit/analysis.hpp"

#include "tskit/demux.hpp"
#include "tskit/errors.hpp"
#include "tskit/ingest.hpp"

#include <algorithm>

namespace tskit {

const char* to_string(PidClassKind kind) {
    switch (kind) {
    case PidClassKind::Video: return "video";
    case PidClassKind::Audio: return "audio";
    case PidClassKind::Private: return "private";
    case PidClassKind::Psi: return "signaling";
    case PidClassKind::Null: return "null";
    case PidClassKind::Unreferenced: return "unreferenced";
    }
    return "unreferenced";
}

const char* to_string(AnomalyKind kind) {
    switch (kind) {
    case AnomalyKind::CcDiscontinuity: return "cc-discontinuity";
    case AnomalyKind::CcExcessDuplicate: return "cc-excess-duplicate";
    case AnomalyKind::TeiSet: return "tei-set";
    case AnomalyKind::SyncLoss: return "sync-loss";
    case AnomalyKind::CrcInvalid: return "crc-invalid";
    case AnomalyKind::ReservedAfc: return "reserved-afc";
    case AnomalyKind::PesStartMissing: return "pes-start-missing";
    }
    return "?";
}

std::optional<AnomalyEvent> ContinuityChecker::feed(const TsPacket& packet,
                                                    uint64_t packet_index) {
    if (pid_ == kNullPid)
        return std::nullopt;
    if (packet.adaptation && packet.adaptation->discontinuity_indicator)
        suppress_ = true;
    if (!packet.has_payload())
        return std::nullopt; // adaptation-only packets do not advance the counter

    uint8_t cc = packet.continuity_counter;
    if (!have_prev_) {
        have_prev_ = true;
        prev_cc_ = cc;
        suppress_ = false;
        return std::nullopt;
    }
    if (suppress_) {
        suppress_ = false;
        prev_cc_ = cc;
        dup_seen_ = false;
        return std::nullopt;
    }
    uint8_t expected = (prev_cc_ + 1) & 0x0F;
    if (cc == expected) {
        prev_cc_ = cc;
        dup_seen_ = false;
        return std::nullopt;
    }
    if (cc == prev_cc_) {
        if (!dup_seen_) {
            dup_seen_ = true; // one repetition is a legal duplicate
            return std::nullopt;
        }
        AnomalyEvent event{AnomalyKind::CcExcessDuplicate, pid_, packet_index,
                           expected,  cc,   "more than one duplicate"};
        return event;
    }
    AnomalyEvent event{AnomalyKind::CcDiscontinuity, pid_, packet_index, expected, cc, ""};
    prev_cc_ = cc;
    dup_seen_ = false;
    return event;
}

std::vector<AnomalyEvent> check_continuity(std::span<const TsPacket> packets,
                                           uint64_t first_index) {
    std::vector<AnomalyEvent> events;
    if (packets.empty())
        return events;
    ContinuityChecker checker(packets.front().pid);
    uint64_t index = first_index;
    for (const TsPacket& packet : packets) {
        if (auto event = checker.feed(packet, index))
            events.push_back(std::move(*event));
        ++index;
    }
    return events;
}

PidClassKind class_for_stream_type(uint8_t stream_type) {
    switch (stream_type) {
    case 0x01: case 0x02: case 0x10: case 0x1B:
        return PidClassKind::Video;
    case 0x03: case 0x04: case 0x0F: case 0x11:
        return PidClassKind::Audio;
    default:
        return PidClassKind::Private;
    }
}

std::map<uint16_t, PidClass> classify_pids(const std::optional<PatTable>& pat,
                                           const std::vector<PmtTable>& pmts,
                                           const std::set<uint16_t>& observed_pids) {
    std::set<uint16_t> pmt_pids;
    if (pat)
        for (const auto& [program, pid] : pat->programs)
            pmt_pids.insert(pid);

    std::map<uint16_t, uint8_t> es_types;
    for (const PmtTable& pmt : pmts)
        for (const PmtStream& es : pmt.streams)
            es_types.emplace(es.elementary_pid, es.stream_type); // first PMT wins

    std::map<uint16_t, PidClass> out;
    for (uint16_t pid : observed_pids) {
        PidClass cls;
        if (pid == kNullPid) {
            cls.kind = PidClassKind::Null;
        } else if (pid == kPidPat) {
            cls = {PidClassKind::Psi, SiKind::Pat};
        } else if (pid == kPidNit || (pat && pat->network_pid && *pat->network_pid == pid)) {
            cls = {PidClassKind::Psi, SiKind::Nit};
        } else if (pid == kPidSdt) {
            cls = {PidClassKind::Psi, SiKind::Sdt};
        } else if (pid == kPidEit) {
            cls = {PidClassKind::Psi, SiKind::Eit};
        } else if (pid == kPidTdt) {
            cls = {PidClassKind::Psi, SiKind::Tdt};
        } else if (pmt_pids.count(pid)) {
            cls = {PidClassKind::Psi, SiKind::Pmt};
        } else if (auto it = es_types.find(pid); it != es_types.end()) {
            cls.kind = class_for_stream_type(it->second);
        } else {
            cls.kind = PidClassKind::Unreferenced;
        }
        out.emplace(pid, cls);
    }
    return out;
}

BitrateEstimate estimate_bitrate(std::span<const PcrObservation> observations) {
    if (observations.size() < 2)
        raise(Errc::insufficient_pcrs, "need at least two PCR observations");

    // Unroll 33-bit base wraparound: a later value smaller by more than
    // half the range is a wrap, not a jump backwards.
    std::vector<PcrObservation> unrolled(observations.begin(), observations.end());
    uint64_t wrap_acc = 0;
    for (size_t i = 1; i < unrolled.size(); ++i) {
        uint64_t prev = unrolled[i - 1].pcr;
        uint64_t cur = unrolled[i].pcr + wrap_acc;
        if (cur < prev && prev - cur > kPcrWrap / 2) {
            wrap_acc += kPcrWrap;
            cur += kPcrWrap;
        }
        unrolled[i].pcr = cur;
    }

    BitrateEstimate estimate;
    for (size_t i = 1; i < unrolled.size(); ++i) {
        const auto& a = unrolled[i - 1];
        const auto& b = unrolled[i];
        if (b.pcr <= a.pcr) {
            estimate.skipped_intervals += 1; // non-monotonic, skip the interval
            continue;
        }
        double bits = static_cast<double>(b.byte_position - a.byte_position) * 8.0;
        estimate.interval_bps.push_back(bits * kPcrTicksPerSecond /
                                        static_cast<double>(b.pcr - a.pcr));
    }

    const auto& first = unrolled.front();
    const auto& last = unrolled.back();
    if (last.pcr <= first.pcr)
        raise(Errc::non_monotonic_pcr, "no usable PCR span");
    double bits = static_cast<double>(last.byte_position - first.byte_position) * 8.0;
    estimate.bps = bits * kPcrTicksPerSecond / static_cast<double>(last.pcr - first.pcr);
    return estimate;
}

namespace {

struct PidState {
    PidStats stats;
    ContinuityChecker cc;
    std::unique_ptr<SectionAssembler> sections;
    std::unique_ptr<PesAssembler> pes;
    std::vector<PcrObservation> pcr_obs;

    explicit PidState(uint16_t pid) : cc(pid) { stats.pid = pid; }
};

struct PsiKey {
    uint16_t pid;
    uint8_t table_id;
    int version; // -1 = short form
    uint8_t section_number;

    auto operator<=>(const PsiKey&) const = default;
};

} // namespace

struct StreamAnalyzer::Impl {
    FrameAlignment alignment;
    uint64_t total_packets = 0;
    std::map<uint16_t, PidState> pids;
    std::vector<uint16_t> pid_order; // first appearance
    std::optional<PatTable> pat;
    std::set<uint16_t> announced_pmt_pids;
    std::map<uint16_t, PmtTable> pmt_by_program;
    std::map<PsiKey, PsiRow> psi_rows;
    std::vector<PsiKey> psi_order;
    std::vector<AnomalyEvent> anomalies;
    uint64_t anomaly_count = 0;

    PidState& state_for(uint16_t pid, uint64_t index, const TsPacket& packet) {
        auto it = pids.find(pid);
        if (it == pids.end()) {
            it = pids.emplace(pid, PidState(pid)).first;
            pid_order.push_back(pid);
            PidStats& s = it->second.stats;
            s.first_seen_index = index;
            s.first_cc = packet.continuity_counter;
            s.first_afc = packet.adaptation_field_control;
        }
        return it->second;
    }

    bool is_signaling_pid(uint16_t pid) const {
        return pid == kPidPat || pid == kPidNit || pid == kPidSdt || pid == kPidEit ||
               pid == kPidTdt || announced_pmt_pids.count(pid) ||
               (pat && pat->network_pid && *pat->network_pid == pid);
    }

    void add_anomaly(AnomalyEvent event) {
        anomalies.push_back(std::move(event));
        anomaly_count += 1;
    }

    void on_pat(const PatTable& table) {
        pat = table;
        for (const auto& [program, pid] : table.programs) {
            announced_pmt_pids.insert(pid);
            auto it = pids.find(pid);
            if (it != pids.end() && it->second.pes) {
                it->second.pes.reset(); // PID turned out to carry signaling
                if (!it->second.sections)
                    it->second.sections = std::make_unique<SectionAssembler>(pid);
            }
        }
    }

    void on_section(uint16_t pid, const PsiSection& section, uint64_t index) {
        PsiKey key{pid, section.table_id,
                   section.section_syntax_indicator ? int(section.version_number) : -1,
                   section.section_number};
        auto it = psi_rows.find(key);
        if (it == psi_rows.end()) {
            PsiRow row;
            row.pid = pid;
            row.kind = classify_table(pid, section.table_id, announced_pmt_pids);
            row.table_id = section.table_id;
            row.section_length = section.section_length;
            if (section.section_syntax_indicator)
                row.version = section.version_number;
            row.section_number = section.section_number;
            row.first_packet_index = index;
            it = psi_rows.emplace(key, std::move(row)).first;
            psi_order.push_back(key);
        }
        it->second.occurrences += 1;

        if (section.crc_status == CrcStatus::Invalid) {
            add_anomaly({AnomalyKind::CrcInvalid, pid, index, std::nullopt, std::nullopt,
                         "section CRC mismatch"});
            return;
        }
        if (section.crc_status != CrcStatus::Valid)
            return;
        try {
            if (pid == kPidPat && section.table_id == kTableIdPat) {
                on_pat(parse_pat(section));
            } else if (section.table_id == kTableIdPmt && announced_pmt_pids.count(pid)) {
                PmtTable pmt = parse_pmt(section);
                pmt_by_program[pmt.program_number] = std::move(pmt);
            }
        } catch (const Error&) {
            // malformed table body: header already reported in psi_rows
        }
    }

    void feed(std::span<const uint8_t> frame, uint64_t byte_offset) {
        uint64_t index = total_packets++;
        TsPacket packet;
        try {
            packet = parse_packet(frame, alignment.packet_size);
        } catch (const Error&) {
            return; // reader guarantees the sync byte; anything else is hostile input
        }

        PidState& state = state_for(packet.pid, index, packet);
        PidStats& stats = state.stats;
        stats.packet_count += 1;
        stats.last_cc = packet.continuity_counter;
        if (packet.transport_error_indicator) {
            stats.tei_count += 1;
            add_anomaly({AnomalyKind::TeiSet, packet.pid, index, std::nullopt, std::nullopt, ""});
        }
        if (packet.transport_priority)
            stats.priority_count += 1;
        if (packet.adaptation_field_control == 0)
            add_anomaly({AnomalyKind::ReservedAfc, packet.pid, index, std::nullopt, std::nullopt,
                         "adaptation_field_control 0"});
        if (packet.adaptation && packet.adaptation->pcr) {
            stats.pcr_count += 1;
            uint64_t value = packet.adaptation->pcr->value();
            if (!stats.first_pcr)
                stats.first_pcr = value;
            state.pcr_obs.push_back({byte_offset, value});
        }
        if (auto event = state.cc.feed(packet, index))
            add_anomaly(std::move(*event));

        if (packet.transport_error_indicator)
            return; // content not trustworthy; counting is enough
        if (is_signaling_pid(packet.pid)) {
            if (state.pes)
                state.pes.reset();
            if (!state.sections)
                state.sections = std::make_unique<SectionAssembler>(packet.pid);
            if (packet.has_payload() && !packet.payload.empty()) {
                for (PsiSection& section :
                     state.sections->feed(packet.payload_unit_start_indicator, packet.payload))
                    on_section(packet.pid, section, index);
            }
        } else if (packet.pid != kNullPid) {
            if (!state.pes)
                state.pes = std::make_unique<PesAssembler>(packet.pid);
            state.pes->feed(packet, index);
        }
    }

    StreamReport finish() {
        StreamReport report;
        report.alignment = alignment;
        report.total_packets = total_packets;

        std::set<uint16_t> observed(pid_order.begin(), pid_order.end());
        std::vector<PmtTable> pmts;
        if (pat) {
            for (const auto& [program, pmt_pid] : pat->programs) {
                auto it = pmt_by_program.find(program);
                if (it != pmt_by_program.end())
                    pmts.push_back(it->second);
            }
        }
        auto classes = classify_pids(pat, pmts, observed);

        for (auto& [pid, state] : pids) {
            state.stats.cls = classes.at(pid);
            if (state.sections)
                state.sections->finish();
            bool is_es = state.stats.cls.kind == PidClassKind::Video ||
                         state.stats.cls.kind == PidClassKind::Audio ||
                         state.stats.cls.kind == PidClassKind::Private;
            if (state.pes) {
                state.pes->finish();
                if (is_es) {
                    state.stats.pes_complete = state.pes->complete_count();
                    for (const AnomalyEvent& event : state.pes->anomalies())
                        anomalies.push_back(event);
                }
            }
        }
        std::stable_sort(anomalies.begin(), anomalies.end(),
                         [](const AnomalyEvent& a, const AnomalyEvent& b) {
                             return a.packet_index < b.packet_index;
                         });
        report.anomalies = std::move(anomalies);

        for (uint16_t pid : pid_order)
            report.packet_table.push_back(pids.at(pid).stats);
        uint64_t ordinal = 0;
        for (const PsiKey& key : psi_order) {
            PsiRow row = psi_rows.at(key);
            row.index = ordinal++;
            // PMT PIDs may have been announced after their first section
            row.kind = classify_table(row.pid, row.table_id, announced_pmt_pids);
            report.psi_table.push_back(std::move(row));
        }
        report.pat = pat;
        report.pmts = std::move(pmts);

        for (const auto& [pid, cls] : classes) {
            switch (cls.kind) {
            case PidClassKind::Video: report.summary.video += 1; break;
            case PidClassKind::Audio: report.summary.audio += 1; break;
            case PidClassKind::Psi: report.summary.signaling += 1; break;
            case PidClassKind::Private: report.summary.private_data += 1; break;
            case PidClassKind::Null: report.summary.null_pids += 1; break;
            case PidClassKind::Unreferenced: report.summary.unreferenced += 1; break;
            }
        }

        if (!report.pmts.empty()) {
            uint16_t pcr_pid = report.pmts.front().pcr_pid;
            auto it = pids.find(pcr_pid);
            if (it != pids.end() && it->second.pcr_obs.size() >= 2) {
                try {
                    report.bitrate_bps = estimate_bitrate(it->second.pcr_obs).bps;
                } catch (const Error&) {
                    // not enough usable span; leave the estimate empty
                }
            }
        }
        return report;
    }
};

StreamAnalyzer::StreamAnalyzer() : impl_(std::make_unique<Impl>()) {}
StreamAnalyzer::~StreamAnalyzer() = default;
StreamAnalyzer::StreamAnalyzer(StreamAnalyzer&&) noexcept = default;
StreamAnalyzer& StreamAnalyzer::operator=(StreamAnalyzer&&) noexcept = default;

void StreamAnalyzer::set_alignment(const FrameAlignment& alignment) {
    impl_->alignment = alignment;
}

void StreamAnalyzer::feed_frame(std::span<const uint8_t> frame, uint64_t byte_offset) {
    impl_->feed(frame, byte_offset);
}

void StreamAnalyzer::note_sync_loss(uint64_t byte_offset) {
    impl_->add_anomaly({AnomalyKind::SyncLoss, kNullPid, impl_->total_packets, std::nullopt,
                        std::nullopt, "at byte " + std::to_string(byte_offset)});
}

uint64_t StreamAnalyzer::packets_seen() const {
    return impl_->total_packets;
}

uint64_t StreamAnalyzer::anomalies_seen() const {
    return impl_->anomaly_count;
}

StreamReport StreamAnalyzer::finish() {
    return impl_->finish();
}

StreamReport analyze_reader(AlignedReader& reader) {
    StreamAnalyzer analyzer;
    size_t loss_cursor = 0;
    bool first = true;
    while (auto frame = reader.next()) {
        if (first) {
            analyzer.set_alignment(reader.alignment());
            first = false;
        }
        for (; loss_cursor < reader.sync_loss_offsets().size(); ++loss_cursor)
            analyzer.note_sync_loss(reader.sync_loss_offsets()[loss_cursor]);
        analyzer.feed_frame(frame->data, frame->source_offset);
    }
    for (; loss_cursor < reader.sync_loss_offsets().size(); ++loss_cursor)
        analyzer.note_sync_loss(reader.sync_loss_offsets()[loss_cursor]);
    return analyzer.finish();
}

StreamReport analyze_bytes(std::span<const uint8_t> stream, int requested_packet_size) {
    MemorySource source(stream);
    ReaderOptions options;
    options.packet_size = requested_packet_size;
    AlignedReader reader(source, options);
    return analyze_reader(reader);
}

} // namespace tskit
