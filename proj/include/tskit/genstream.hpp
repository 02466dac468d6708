#pragma once

#include "tskit/analysis.hpp"
#include "tskit/packet.hpp"
#include "tskit/psi.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tskit {

struct EsSpec {
    uint16_t pid = 0;
    uint8_t stream_type = 0;
    uint32_t rate_bps = 0;           // PES byte-stream rate (headers included)
    uint32_t pes_payload_bytes = 0;  // ES payload carried per PES unit
    std::vector<uint8_t> es_info;    // raw descriptor bytes for the PMT entry

    bool operator==(const EsSpec&) const = default;
};

struct ProgramSpec {
    uint16_t program_number = 0;
    uint16_t pmt_pid = 0;
    uint16_t pcr_pid = 0; // one of the stream PIDs or the pmt_pid
    uint8_t pmt_version = 0;
    std::vector<EsSpec> streams;

    bool operator==(const ProgramSpec&) const = default;
};

/// Raw-body SI table carried on one of the DVB signaling PIDs
/// (16/17/18/20). Body bytes are either given explicitly or synthesized
/// from the stream seed at the requested length.
struct SiTableSpec {
    uint16_t pid = 0;
    uint8_t table_id = 0;
    bool long_form = true;
    uint8_t version = 0;
    uint16_t table_id_extension = 1;
    uint16_t body_length = 0;
    std::vector<uint8_t> body; // wins over body_length when non-empty

    bool operator==(const SiTableSpec&) const = default;
};

enum class ErrorKind { CcGap, CcDuplicate, TeiFlag, SyncCorrupt, CrcCorrupt };

const char* to_string(ErrorKind kind);

struct ErrorSpec {
    ErrorKind kind = ErrorKind::TeiFlag;
    uint16_t pid = 0; // target PID; ignored for SyncCorrupt
    std::vector<uint64_t> at_packet_indices;

    bool operator==(const ErrorSpec&) const = default;
};

/// Declarative description of a stream to synthesize. Deterministic for
/// a fixed spec + seed.
struct StreamSpec {
    uint16_t transport_stream_id = 1;
    int packet_size = kPacketSize; // 204 appends 16 zero parity bytes
    uint32_t target_bitrate_bps = 0;
    uint32_t duration_ms = 0;
    uint32_t psi_repetition_ms = 100;
    uint8_t pat_version = 0;
    std::optional<uint16_t> network_pid; // PAT program 0 entry
    std::vector<ProgramSpec> programs;
    std::vector<SiTableSpec> si_tables;
    std::vector<ErrorSpec> errors;
    uint64_t seed = 0;

    bool operator==(const StreamSpec&) const = default;
};

struct PsiTruthRow {
    uint16_t pid = 0;
    uint8_t table_id = 0;
    std::optional<uint8_t> version;
    uint8_t section_number = 0;
    uint16_t section_length = 0;

    bool operator==(const PsiTruthRow&) const = default;
    auto operator<=>(const PsiTruthRow&) const = default;
};

/// Everything the generator knows about the stream it wrote; the oracle
/// the analyzer is checked against.
struct GroundTruth {
    int packet_size = kPacketSize;
    uint64_t total_packets = 0;
    std::map<uint16_t, uint64_t> packet_count;
    std::map<uint16_t, PidClass> classes;
    std::map<uint16_t, uint8_t> stream_types;
    std::vector<PsiTruthRow> psi_rows;
    std::map<uint16_t, uint64_t> pes_complete;
    std::map<uint16_t, uint64_t> es_payload_bytes;
    std::vector<std::pair<uint16_t, uint16_t>> programs; // number -> PMT PID, PAT order
    uint16_t pcr_reference_pid = 0;
    uint64_t pcr_packets = 0;
    uint32_t target_bitrate_bps = 0;
    uint32_t duration_ms = 0;
};

struct Generated {
    std::vector<uint8_t> bytes;
    GroundTruth truth;
};

/// Rejects impossible specs: PID collisions, reserved PIDs, capacity.
/// Throws Errc::spec_pid_collision / Errc::spec_over_capacity.
void validate_spec(const StreamSpec& spec);

/// Synthesizes the stream: PSI on schedule, CBR pacing with null fill,
/// PCR on each program's PCR PID, seeded PES payloads.
Generated generate(const StreamSpec& spec);

struct InjectionRecord {
    ErrorKind kind = ErrorKind::TeiFlag;
    uint16_t pid = 0;           // PID of the mutated packet
    uint64_t packet_index = 0;  // index in the pre-injection stream
    std::string detail;

    bool operator==(const InjectionRecord&) const = default;
};

struct Injected {
    std::vector<uint8_t> bytes;
    std::vector<InjectionRecord> ledger;
};

/// Applies the error list to an aligned stream. Indices refer to the
/// input stream; every mutation is recorded in the ledger.
Injected inject_errors(std::span<const uint8_t> stream, std::span<const ErrorSpec> errors,
                       int packet_size = kPacketSize);

/// Built-in demo mux: two programs sharing a video PID, three audio
/// PIDs and a private-data PID, with the full DVB signaling set.
StreamSpec builtin_demo_spec();

StreamSpec load_stream_spec(const std::filesystem::path& path);
void save_stream_spec(const StreamSpec& spec, const std::filesystem::path& path);
std::string stream_spec_to_json(const StreamSpec& spec);
StreamSpec stream_spec_from_json(const std::string& text);

} // namespace tskit
