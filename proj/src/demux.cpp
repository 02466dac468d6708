#include "tskit/demux.hpp"

#include "tskit/errors.hpp"
#include "tskit/ingest.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>

namespace tskit {

namespace {

constexpr size_t kPesPrefix = 6; // 00 00 01 stream_id length(2)

// Stream ids whose PES header has no flags/header-length extension.
bool bare_header_stream_id(uint8_t stream_id) {
    switch (stream_id) {
    case 0xBC: // program_stream_map
    case 0xBE: // padding_stream
    case 0xBF: // private_stream_2
    case 0xF0: // ECM
    case 0xF1: // EMM
    case 0xF2: // DSM-CC
    case 0xF8: // ITU-T H.222.1 type E
    case 0xFF: // program_stream_directory
        return true;
    default:
        return false;
    }
}

} // namespace

void PesAssembler::close_current(bool complete) {
    if (!open_)
        return;
    PesPacket pes;
    pes.stream_id = stream_id_;
    pes.declared_length = declared_length_;
    pes.payload = std::move(payload_);
    pes.complete = complete;
    if (complete)
        complete_count_ += 1;
    out_.push_back(std::move(pes));
    open_ = false;
    header_done_ = false;
    head_.clear();
    payload_.clear();
}

void PesAssembler::consume(std::span<const uint8_t> bytes) {
    size_t i = 0;
    while (open_ && i < bytes.size()) {
        size_t avail = bytes.size() - i;
        bool bounded = declared_length_ > 0 || head_.size() < kPesPrefix;
        size_t cap = bounded && head_.size() >= kPesPrefix ? body_remaining_ : avail;

        if (head_.size() < kPesPrefix) {
            size_t take = std::min(kPesPrefix - head_.size(), avail);
            head_.insert(head_.end(), bytes.begin() + i, bytes.begin() + i + take);
            i += take;
            if (head_.size() == kPesPrefix) {
                stream_id_ = head_[3];
                declared_length_ = static_cast<uint16_t>((head_[4] << 8) | head_[5]);
                body_remaining_ = declared_length_;
                if (bare_header_stream_id(stream_id_)) {
                    header_done_ = true;
                    header_skip_ = 0;
                } else {
                    header_done_ = false;
                }
            }
            continue;
        }

        if (!header_done_) {
            // flags(2) + PES_header_data_length(1), then skip that many bytes
            size_t have_ext = head_.size() - kPesPrefix;
            size_t take = std::min(size_t{3} - have_ext, avail);
            if (declared_length_ > 0)
                take = std::min(take, body_remaining_);
            head_.insert(head_.end(), bytes.begin() + i, bytes.begin() + i + take);
            i += take;
            if (declared_length_ > 0) {
                body_remaining_ -= take;
                if (body_remaining_ == 0 && head_.size() - kPesPrefix < 3) {
                    close_current(true); // declared length ends inside the header
                    return;
                }
            }
            if (head_.size() - kPesPrefix == 3) {
                header_skip_ = head_.back();
                header_done_ = true;
            }
            continue;
        }

        if (header_skip_ > 0) {
            size_t take = std::min(header_skip_, avail);
            if (declared_length_ > 0)
                take = std::min(take, cap);
            header_skip_ -= take;
            i += take;
            if (declared_length_ > 0) {
                body_remaining_ -= take;
                if (body_remaining_ == 0) {
                    close_current(true);
                    return;
                }
            }
            continue;
        }

        size_t take = declared_length_ > 0 ? std::min(cap, avail) : avail;
        payload_.insert(payload_.end(), bytes.begin() + i, bytes.begin() + i + take);
        payload_bytes_ += take;
        i += take;
        if (declared_length_ > 0) {
            body_remaining_ -= take;
            if (body_remaining_ == 0) {
                close_current(true);
                // bytes after a bounded PES inside the same packet are padding
                return;
            }
        }
    }
}

std::vector<PesPacket> PesAssembler::feed(const TsPacket& packet, uint64_t packet_index) {
    out_.clear();
    if (!packet.has_payload() || packet.payload.empty())
        return std::move(out_);

    std::span<const uint8_t> payload(packet.payload);
    if (packet.payload_unit_start_indicator) {
        if (open_) {
            // the previous unit ends here: whole if it was unbounded,
            // cut short if it still owed bytes
            bool whole = declared_length_ == 0 && header_done_ && header_skip_ == 0 &&
                         head_.size() == kPesPrefix + 3;
            bool bare_whole = declared_length_ == 0 && header_done_ && head_.size() == kPesPrefix;
            close_current(whole || bare_whole);
        }
        if (payload.size() < 3 || payload[0] != 0x00 || payload[1] != 0x00 || payload[2] != 0x01) {
            anomalies_.push_back({AnomalyKind::PesStartMissing, pid_, packet_index, std::nullopt,
                                  std::nullopt, "unit start without 00 00 01"});
            return std::move(out_);
        }
        open_ = true;
        header_done_ = false;
        head_.clear();
        payload_.clear();
        header_skip_ = 0;
        body_remaining_ = 0;
        consume(payload);
    } else if (open_) {
        consume(payload);
    }
    return std::move(out_);
}

std::optional<PesPacket> PesAssembler::finish() {
    if (!open_)
        return std::nullopt;
    close_current(false);
    PesPacket trailing = std::move(out_.back());
    out_.clear();
    return trailing;
}

std::vector<PesPacket> extract_pes(std::span<const TsPacket> packets) {
    std::vector<PesPacket> all;
    if (packets.empty())
        return all;
    PesAssembler assembler(packets.front().pid);
    uint64_t index = 0;
    for (const TsPacket& packet : packets) {
        for (PesPacket& pes : assembler.feed(packet, index))
            all.push_back(std::move(pes));
        ++index;
    }
    if (auto trailing = assembler.finish())
        all.push_back(std::move(*trailing));
    return all;
}

FileSink::FileSink(const std::filesystem::path& path) {
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_)
        raise(Errc::sink_write_failure,
              "cannot open " + path.string() + ": " + std::strerror(errno));
}

FileSink::~FileSink() {
    if (file_)
        std::fclose(file_);
}

bool FileSink::write(std::span<const uint8_t> bytes) {
    return std::fwrite(bytes.data(), 1, bytes.size(), file_) == bytes.size();
}

std::filesystem::path default_es_path(const std::filesystem::path& input, uint16_t pid) {
    std::filesystem::path out = input;
    out.replace_filename(input.stem().string() + "_pid" + std::to_string(pid) + ".es");
    return out;
}

std::map<uint16_t, SinkSummary> demux_to_sinks(AlignedReader& reader,
                                               const DemuxSelection& selection,
                                               const SinkFactory& make_sink) {
    struct Extraction {
        std::unique_ptr<PesAssembler> pes;
        std::unique_ptr<ByteSink> sink;
        SinkSummary summary;
    };
    std::map<uint16_t, Extraction> active;
    std::map<uint16_t, SinkSummary> result;

    // PAT/PMT discovery, needed for the all-ES selection
    SectionAssembler pat_sections(kPidPat);
    std::map<uint16_t, SectionAssembler> pmt_sections;
    std::set<uint16_t> announced_pmt_pids;
    std::set<uint16_t> es_pids;

    auto selected = [&](uint16_t pid) {
        return selection.all_es ? es_pids.count(pid) > 0 : selection.pids.count(pid) > 0;
    };
    auto deliver = [&](Extraction& ex, const PesPacket& pes) {
        if (ex.summary.write_failed)
            return;
        if (!ex.sink->write(pes.payload)) {
            ex.summary.write_failed = true; // abandon this PID, keep the rest
            return;
        }
        ex.summary.bytes += pes.payload.size();
        if (pes.complete)
            ex.summary.pes_count += 1;
    };

    while (auto frame = reader.next()) {
        TsPacket packet;
        try {
            packet = parse_packet(frame->data, reader.alignment().packet_size);
        } catch (const Error&) {
            continue;
        }
        if (packet.pid == kPidPat && packet.has_payload() && !packet.payload.empty()) {
            for (const PsiSection& section :
                 pat_sections.feed(packet.payload_unit_start_indicator, packet.payload)) {
                if (section.crc_status != CrcStatus::Valid)
                    continue;
                try {
                    PatTable pat = parse_pat(section);
                    for (const auto& [program, pid] : pat.programs) {
                        announced_pmt_pids.insert(pid);
                        pmt_sections.try_emplace(pid, pid);
                    }
                } catch (const Error&) {
                }
            }
            continue;
        }
        if (announced_pmt_pids.count(packet.pid) && packet.has_payload() &&
            !packet.payload.empty()) {
            for (const PsiSection& section : pmt_sections.at(packet.pid)
                     .feed(packet.payload_unit_start_indicator, packet.payload)) {
                if (section.crc_status != CrcStatus::Valid ||
                    section.table_id != kTableIdPmt)
                    continue;
                try {
                    PmtTable pmt = parse_pmt(section);
                    for (const PmtStream& es : pmt.streams)
                        es_pids.insert(es.elementary_pid);
                } catch (const Error&) {
                }
            }
            continue;
        }
        if (packet.pid == kNullPid || !selected(packet.pid))
            continue;

        auto it = active.find(packet.pid);
        if (it == active.end()) {
            Extraction ex;
            ex.pes = std::make_unique<PesAssembler>(packet.pid);
            ex.sink = make_sink(packet.pid);
            ex.summary.seen = true;
            it = active.emplace(packet.pid, std::move(ex)).first;
        }
        for (const PesPacket& pes : it->second.pes->feed(packet, frame->index))
            deliver(it->second, pes);
    }

    for (auto& [pid, ex] : active) {
        if (auto trailing = ex.pes->finish())
            deliver(ex, *trailing);
        result[pid] = ex.summary;
    }
    if (!selection.all_es)
        for (uint16_t pid : selection.pids)
            result.try_emplace(pid, SinkSummary{}); // selected but absent
    return result;
}

} // namespace tskit
