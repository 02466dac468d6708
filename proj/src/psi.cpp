#include "tskit/psi.hpp"

#include "tskit/crc32.hpp"
#include "tskit/errors.hpp"

#include <algorithm>

namespace tskit {

const char* to_string(SiKind kind) {
    switch (kind) {
    case SiKind::Pat: return "PAT";
    case SiKind::Pmt: return "PMT";
    case SiKind::Nit: return "NIT";
    case SiKind::Sdt: return "SDT";
    case SiKind::Eit: return "EIT";
    case SiKind::Tdt: return "TDT";
    case SiKind::Other: return "other";
    }
    return "other";
}

namespace {

constexpr size_t kSectionHeader = 3;
constexpr size_t kLongHeader = 8; // through last_section_number
constexpr size_t kCrcSize = 4;

size_t declared_total(const std::vector<uint8_t>& head) {
    // valid once the 3 header bytes are in
    return kSectionHeader + (((head[1] & 0x0F) << 8) | head[2]);
}

PsiSection build_section(uint16_t pid, std::vector<uint8_t> raw) {
    PsiSection s;
    s.pid = pid;
    s.raw = std::move(raw);
    s.table_id = s.raw[0];
    s.section_syntax_indicator = (s.raw[1] & 0x80) != 0;
    s.section_length = static_cast<uint16_t>(((s.raw[1] & 0x0F) << 8) | s.raw[2]);
    if (s.section_syntax_indicator && s.raw.size() >= kLongHeader + kCrcSize) {
        s.table_id_extension = static_cast<uint16_t>((s.raw[3] << 8) | s.raw[4]);
        s.version_number = (s.raw[5] >> 1) & 0x1F;
        s.current_next_indicator = (s.raw[5] & 0x01) != 0;
        s.section_number = s.raw[6];
        s.last_section_number = s.raw[7];
        s.body.assign(s.raw.begin() + kLongHeader, s.raw.end() - kCrcSize);
        s.crc_status = crc32_mpeg(s.raw) == 0 ? CrcStatus::Valid : CrcStatus::Invalid;
    } else if (s.section_syntax_indicator) {
        // long-form flag with a body too short for header+CRC
        s.crc_status = CrcStatus::Invalid;
    } else {
        s.body.assign(s.raw.begin() + kSectionHeader, s.raw.end());
        s.crc_status = CrcStatus::NotApplicable;
    }
    return s;
}

} // namespace

std::optional<PsiSection> SectionAssembler::take_complete() {
    if (pending_.size() < kSectionHeader)
        return std::nullopt;
    size_t total = declared_total(pending_);
    if (pending_.size() < total)
        return std::nullopt;
    std::vector<uint8_t> raw(pending_.begin(), pending_.begin() + total);
    pending_.erase(pending_.begin(), pending_.begin() + total);
    acct_.section_bytes += total;
    return build_section(pid_, std::move(raw));
}

void SectionAssembler::start_region(std::span<const uint8_t> bytes) {
    size_t i = 0;
    while (i < bytes.size()) {
        if (pending_.empty() && bytes[i] == 0xFF) {
            // stuffing runs to the end of the payload
            acct_.stuffing_bytes += bytes.size() - i;
            return;
        }
        size_t want = pending_.size() < kSectionHeader
                          ? kSectionHeader - pending_.size()
                          : declared_total(pending_) - pending_.size();
        size_t take = std::min(want, bytes.size() - i);
        pending_.insert(pending_.end(), bytes.begin() + i, bytes.begin() + i + take);
        i += take;
        if (auto section = take_complete()) {
            out_.push_back(std::move(*section));
            mid_section_ = false;
        } else {
            mid_section_ = true; // the section spans into the next packet
        }
    }
}

std::vector<PsiSection> SectionAssembler::feed(bool payload_unit_start,
                                               std::span<const uint8_t> payload) {
    out_.clear();
    acct_.fed_bytes += payload.size();
    if (payload.empty())
        return std::move(out_);

    if (!payload_unit_start) {
        if (!mid_section_) {
            if (payload[0] == 0xFF)
                acct_.stuffing_bytes += payload.size();
            else
                acct_.discarded_bytes += payload.size(); // orphan continuation
            return std::move(out_);
        }
        // grow the header first, then cap at the declared total
        size_t i = 0;
        while (i < payload.size() && mid_section_) {
            size_t want = pending_.size() < kSectionHeader
                              ? kSectionHeader - pending_.size()
                              : declared_total(pending_) - pending_.size();
            size_t take = std::min(want, payload.size() - i);
            pending_.insert(pending_.end(), payload.begin() + i, payload.begin() + i + take);
            i += take;
            if (auto section = take_complete()) {
                out_.push_back(std::move(*section));
                mid_section_ = false;
            }
        }
        // a section may not start outside a unit-start packet: the
        // remainder is stuffing or garbage
        if (i < payload.size()) {
            if (payload[i] == 0xFF)
                acct_.stuffing_bytes += payload.size() - i;
            else
                acct_.discarded_bytes += payload.size() - i;
        }
        return std::move(out_);
    }

    // unit start: pointer_field, then continuation bytes, then new sections
    uint8_t pointer = payload[0];
    if (pointer > payload.size() - 1) {
        // a pointer past the payload cannot be real; an all-stuffing
        // payload carries 0xFF here
        if (pointer == 0xFF) {
            acct_.stuffing_bytes += payload.size();
        } else {
            acct_.discarded_bytes += payload.size();
        }
        if (mid_section_) {
            acct_.discarded_bytes += pending_.size();
            pending_.clear();
            mid_section_ = false;
        }
        return std::move(out_);
    }
    acct_.pointer_bytes += 1;
    size_t cont = std::min<size_t>(pointer, payload.size() - 1);
    std::span<const uint8_t> cont_bytes = payload.subspan(1, cont);

    if (mid_section_) {
        size_t i = 0;
        while (i < cont_bytes.size() && mid_section_) {
            size_t want = pending_.size() < kSectionHeader
                              ? kSectionHeader - pending_.size()
                              : declared_total(pending_) - pending_.size();
            size_t take = std::min(want, cont_bytes.size() - i);
            pending_.insert(pending_.end(), cont_bytes.begin() + i, cont_bytes.begin() + i + take);
            i += take;
            if (auto section = take_complete()) {
                out_.push_back(std::move(*section));
                mid_section_ = false;
            }
        }
        if (mid_section_) {
            // the continuation area ended but the section is still short:
            // the pointer contradicts the pending section, drop it
            acct_.discarded_bytes += pending_.size();
            pending_.clear();
            mid_section_ = false;
        } else if (i < cont_bytes.size()) {
            acct_.discarded_bytes += cont_bytes.size() - i;
        }
    } else {
        acct_.discarded_bytes += cont_bytes.size(); // no section was pending
    }

    pending_.clear();
    mid_section_ = false;
    start_region(payload.subspan(1 + cont));
    return std::move(out_);
}

std::optional<size_t> SectionAssembler::finish() {
    if (!mid_section_ && pending_.empty())
        return std::nullopt;
    size_t dropped = pending_.size();
    acct_.discarded_bytes += dropped;
    pending_.clear();
    mid_section_ = false;
    return dropped;
}

SiKind classify_table(uint16_t pid, uint8_t table_id,
                      const std::set<uint16_t>& announced_pmt_pids) {
    if (pid == kPidPat && table_id == kTableIdPat)
        return SiKind::Pat;
    if (pid == kPidNit && (table_id == 0x40 || table_id == 0x41))
        return SiKind::Nit;
    if (pid == kPidSdt && (table_id == 0x42 || table_id == 0x46))
        return SiKind::Sdt;
    if (pid == kPidEit && table_id >= 0x4E && table_id <= 0x6F)
        return SiKind::Eit;
    if (pid == kPidTdt && table_id == kTableIdTdt)
        return SiKind::Tdt;
    if (table_id == kTableIdPmt && announced_pmt_pids.count(pid))
        return SiKind::Pmt;
    return SiKind::Other;
}

SiTableInfo parse_si_header(const PsiSection& section,
                            const std::set<uint16_t>& announced_pmt_pids) {
    SiTableInfo info;
    info.kind = classify_table(section.pid, section.table_id, announced_pmt_pids);
    info.pid = section.pid;
    info.table_id = section.table_id;
    info.section_length = section.section_length;
    if (section.section_syntax_indicator)
        info.version_number = section.version_number;
    info.section_number = section.section_number;
    return info;
}

PatTable parse_pat(const PsiSection& section) {
    if (section.table_id != kTableIdPat)
        raise(Errc::wrong_table_id, "not a PAT section");
    if (section.crc_status != CrcStatus::Valid)
        raise(Errc::crc_invalid, "PAT section CRC invalid");
    if (section.body.size() % 4 != 0)
        raise(Errc::bad_pat_body, "PAT body length not a multiple of 4");

    PatTable pat;
    pat.transport_stream_id = section.table_id_extension;
    pat.version = section.version_number;
    for (size_t i = 0; i < section.body.size(); i += 4) {
        uint16_t program = static_cast<uint16_t>((section.body[i] << 8) | section.body[i + 1]);
        uint16_t pid =
            static_cast<uint16_t>(((section.body[i + 2] & 0x1F) << 8) | section.body[i + 3]);
        if (program == 0)
            pat.network_pid = pid;
        else
            pat.programs.emplace_back(program, pid);
    }
    return pat;
}

PmtTable parse_pmt(const PsiSection& section) {
    if (section.table_id != kTableIdPmt)
        raise(Errc::wrong_table_id, "not a PMT section");
    if (section.crc_status != CrcStatus::Valid)
        raise(Errc::crc_invalid, "PMT section CRC invalid");
    const auto& body = section.body;
    if (body.size() < 4)
        raise(Errc::descriptor_overrun, "PMT body too short");

    PmtTable pmt;
    pmt.program_number = section.table_id_extension;
    pmt.pcr_pid = static_cast<uint16_t>(((body[0] & 0x1F) << 8) | body[1]);
    size_t info_len = ((body[2] & 0x0F) << 8) | body[3];
    size_t pos = 4;
    if (pos + info_len > body.size())
        raise(Errc::descriptor_overrun, "program_info_length overruns PMT body");
    pmt.program_info.assign(body.begin() + pos, body.begin() + pos + info_len);
    pos += info_len;

    while (pos < body.size()) {
        if (pos + 5 > body.size())
            raise(Errc::descriptor_overrun, "truncated ES loop entry");
        PmtStream es;
        es.stream_type = body[pos];
        es.elementary_pid = static_cast<uint16_t>(((body[pos + 1] & 0x1F) << 8) | body[pos + 2]);
        size_t es_len = ((body[pos + 3] & 0x0F) << 8) | body[pos + 4];
        pos += 5;
        if (pos + es_len > body.size())
            raise(Errc::descriptor_overrun, "ES_info_length overruns PMT body");
        es.es_info.assign(body.begin() + pos, body.begin() + pos + es_len);
        pos += es_len;
        pmt.streams.push_back(std::move(es));
    }
    return pmt;
}

std::vector<uint8_t> encode_long_section(uint8_t table_id, uint16_t table_id_extension,
                                         uint8_t version, uint8_t section_number,
                                         uint8_t last_section_number,
                                         std::span<const uint8_t> body) {
    uint16_t section_length = static_cast<uint16_t>(5 + body.size() + kCrcSize);
    std::vector<uint8_t> out;
    out.reserve(kSectionHeader + section_length);
    out.push_back(table_id);
    out.push_back(static_cast<uint8_t>(0xB0 | ((section_length >> 8) & 0x0F)));
    out.push_back(static_cast<uint8_t>(section_length & 0xFF));
    out.push_back(static_cast<uint8_t>(table_id_extension >> 8));
    out.push_back(static_cast<uint8_t>(table_id_extension & 0xFF));
    out.push_back(static_cast<uint8_t>(0xC0 | ((version & 0x1F) << 1) | 0x01));
    out.push_back(section_number);
    out.push_back(last_section_number);
    out.insert(out.end(), body.begin(), body.end());
    uint32_t crc = crc32_mpeg(out);
    out.push_back(static_cast<uint8_t>(crc >> 24));
    out.push_back(static_cast<uint8_t>(crc >> 16));
    out.push_back(static_cast<uint8_t>(crc >> 8));
    out.push_back(static_cast<uint8_t>(crc));
    return out;
}

std::vector<uint8_t> encode_short_section(uint8_t table_id, std::span<const uint8_t> body) {
    std::vector<uint8_t> out;
    out.reserve(kSectionHeader + body.size());
    out.push_back(table_id);
    out.push_back(static_cast<uint8_t>(0x70 | ((body.size() >> 8) & 0x0F)));
    out.push_back(static_cast<uint8_t>(body.size() & 0xFF));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::vector<uint8_t> encode_pat(const PatTable& pat) {
    std::vector<uint8_t> body;
    auto add_entry = [&body](uint16_t program, uint16_t pid) {
        body.push_back(static_cast<uint8_t>(program >> 8));
        body.push_back(static_cast<uint8_t>(program & 0xFF));
        body.push_back(static_cast<uint8_t>(0xE0 | ((pid >> 8) & 0x1F)));
        body.push_back(static_cast<uint8_t>(pid & 0xFF));
    };
    if (pat.network_pid)
        add_entry(0, *pat.network_pid);
    for (const auto& [program, pid] : pat.programs)
        add_entry(program, pid);
    return encode_long_section(kTableIdPat, pat.transport_stream_id, pat.version, 0, 0, body);
}

std::vector<uint8_t> encode_pmt(const PmtTable& pmt, uint8_t version) {
    std::vector<uint8_t> body;
    body.push_back(static_cast<uint8_t>(0xE0 | ((pmt.pcr_pid >> 8) & 0x1F)));
    body.push_back(static_cast<uint8_t>(pmt.pcr_pid & 0xFF));
    body.push_back(static_cast<uint8_t>(0xF0 | ((pmt.program_info.size() >> 8) & 0x0F)));
    body.push_back(static_cast<uint8_t>(pmt.program_info.size() & 0xFF));
    body.insert(body.end(), pmt.program_info.begin(), pmt.program_info.end());
    for (const auto& es : pmt.streams) {
        body.push_back(es.stream_type);
        body.push_back(static_cast<uint8_t>(0xE0 | ((es.elementary_pid >> 8) & 0x1F)));
        body.push_back(static_cast<uint8_t>(es.elementary_pid & 0xFF));
        body.push_back(static_cast<uint8_t>(0xF0 | ((es.es_info.size() >> 8) & 0x0F)));
        body.push_back(static_cast<uint8_t>(es.es_info.size() & 0xFF));
        body.insert(body.end(), es.es_info.begin(), es.es_info.end());
    }
    return encode_long_section(kTableIdPmt, pmt.program_number, version, 0, 0, body);
}

} // namespace tskit
