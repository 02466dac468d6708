#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tskit {

constexpr uint16_t kPidPat = 0x0000;
constexpr uint16_t kPidNit = 0x0010;
constexpr uint16_t kPidSdt = 0x0011;
constexpr uint16_t kPidEit = 0x0012;
constexpr uint16_t kPidTdt = 0x0014;

constexpr uint8_t kTableIdPat = 0x00;
constexpr uint8_t kTableIdPmt = 0x02;
constexpr uint8_t kTableIdNit = 0x40;
constexpr uint8_t kTableIdSdt = 0x42;
constexpr uint8_t kTableIdEit = 0x4E;
constexpr uint8_t kTableIdTdt = 0x70;

enum class CrcStatus { Valid, Invalid, NotApplicable };

/// One reassembled PSI/SI section. Long-form sections (syntax indicator
/// set) carry the 5-byte extended header and a trailing CRC-32; the CRC
/// is checked but a mismatch does not suppress the section.
struct PsiSection {
    uint16_t pid = 0; // PID the section arrived on
    uint8_t table_id = 0;
    bool section_syntax_indicator = false;
    uint16_t section_length = 0;       // bytes after the length field
    uint16_t table_id_extension = 0;   // long-form only
    uint8_t version_number = 0;        // long-form only
    bool current_next_indicator = true;
    uint8_t section_number = 0;
    uint8_t last_section_number = 0;
    std::vector<uint8_t> body; // table payload, header and CRC stripped
    CrcStatus crc_status = CrcStatus::NotApplicable;
    std::vector<uint8_t> raw; // full section bytes, for hex dumps

    size_t total_bytes() const { return 3u + section_length; }

    bool operator==(const PsiSection&) const = default;
};

/// Reassembles sections from the payload feed of a single PID:
/// pointer_field handling, sections spanning packets, 0xFF stuffing.
class SectionAssembler {
public:
    explicit SectionAssembler(uint16_t pid) : pid_(pid) {}

    /// Feed one packet payload in stream order. Returns every section
    /// completed by this payload.
    std::vector<PsiSection> feed(bool payload_unit_start, std::span<const uint8_t> payload);

    /// End of stream. Returns the byte count of a discarded partial
    /// section, if one was pending (TruncatedSection condition).
    std::optional<size_t> finish();

    struct Accounting {
        uint64_t fed_bytes = 0;
        uint64_t section_bytes = 0;   // total bytes of emitted sections
        uint64_t stuffing_bytes = 0;  // skipped 0xFF filler
        uint64_t pointer_bytes = 0;   // pointer_field framing overhead
        uint64_t discarded_bytes = 0; // orphan continuations + truncated partials
    };
    const Accounting& accounting() const { return acct_; }

private:
    void start_region(std::span<const uint8_t> bytes);
    std::optional<PsiSection> take_complete();

    uint16_t pid_;
    std::vector<uint8_t> pending_;
    bool mid_section_ = false;
    std::vector<PsiSection> out_;
    Accounting acct_;
};

/// Program association: program_number -> PMT PID, in section order.
/// program_number 0 names the network PID.
struct PatTable {
    uint16_t transport_stream_id = 0;
    uint8_t version = 0;
    std::optional<uint16_t> network_pid;
    std::vector<std::pair<uint16_t, uint16_t>> programs;

    bool operator==(const PatTable&) const = default;
};

struct PmtStream {
    uint8_t stream_type = 0;
    uint16_t elementary_pid = 0;
    std::vector<uint8_t> es_info; // raw descriptor bytes

    bool operator==(const PmtStream&) const = default;
};

struct PmtTable {
    uint16_t program_number = 0;
    uint16_t pcr_pid = 0;
    std::vector<uint8_t> program_info; // raw descriptor bytes
    std::vector<PmtStream> streams;

    bool operator==(const PmtTable&) const = default;
};

enum class SiKind { Pat, Pmt, Nit, Sdt, Eit, Tdt, Other };

const char* to_string(SiKind kind);

/// Header-level view of any SI section; bodies stay undecoded.
struct SiTableInfo {
    SiKind kind = SiKind::Other;
    uint16_t pid = 0;
    uint8_t table_id = 0;
    uint16_t section_length = 0;
    std::optional<uint8_t> version_number; // absent for short-form sections
    uint8_t section_number = 0;

    bool operator==(const SiTableInfo&) const = default;
};

/// Requires table_id 0x00 and a valid CRC. Throws Errc::wrong_table_id /
/// Errc::bad_pat_body.
PatTable parse_pat(const PsiSection& section);

/// Requires table_id 0x02 and a valid CRC. Throws Errc::wrong_table_id /
/// Errc::descriptor_overrun.
PmtTable parse_pmt(const PsiSection& section);

/// Classifies a section from (pid, table_id). `announced_pmt_pids` is the
/// PMT PID set learned from the PAT; table_id 0x02 outside it stays Other.
SiTableInfo parse_si_header(const PsiSection& section,
                            const std::set<uint16_t>& announced_pmt_pids = {});

SiKind classify_table(uint16_t pid, uint8_t table_id,
                      const std::set<uint16_t>& announced_pmt_pids);

// --- encoders (stream synthesis and round-trip tests) ---

/// Generic long-form section: header + body + CRC appended.
std::vector<uint8_t> encode_long_section(uint8_t table_id, uint16_t table_id_extension,
                                         uint8_t version, uint8_t section_number,
                                         uint8_t last_section_number,
                                         std::span<const uint8_t> body);

/// Generic short-form section (no CRC).
std::vector<uint8_t> encode_short_section(uint8_t table_id, std::span<const uint8_t> body);

std::vector<uint8_t> encode_pat(const PatTable& pat);
std::vector<uint8_t> encode_pmt(const PmtTable& pmt, uint8_t version);

} // namespace tskit
