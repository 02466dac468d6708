#pragma once

#include "tskit/packet.hpp"
#include "tskit/psi.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tskit {

enum class PidClassKind { Video, Audio, Private, Psi, Null, Unreferenced };

struct PidClass {
    PidClassKind kind = PidClassKind::Unreferenced;
    SiKind psi_kind = SiKind::Other; // meaningful when kind == Psi

    bool operator==(const PidClass&) const = default;
};

const char* to_string(PidClassKind kind);

enum class AnomalyKind {
    CcDiscontinuity,
    CcExcessDuplicate,
    TeiSet,
    SyncLoss,
    CrcInvalid,
    ReservedAfc,
    PesStartMissing,
};

const char* to_string(AnomalyKind kind);

/// One observed irregularity. Anomalies are report data, never parse
/// failures. SyncLoss events are not attributable to a PID and carry
/// pid = 0x1FFF.
struct AnomalyEvent {
    AnomalyKind kind = AnomalyKind::CcDiscontinuity;
    uint16_t pid = 0;
    uint64_t packet_index = 0; // 0-based global index
    std::optional<uint8_t> expected;
    std::optional<uint8_t> observed;
    std::string note;

    bool operator==(const AnomalyEvent&) const = default;
};

/// Per-PID continuity-counter validation. The counter must advance by
/// one (mod 16) on every payload-carrying packet; adaptation-only
/// packets do not advance it; one repetition of the previous counter is
/// tolerated as a duplicate; a set discontinuity_indicator suppresses
/// the next comparison. The null PID is exempt.
class ContinuityChecker {
public:
    explicit ContinuityChecker(uint16_t pid) : pid_(pid) {}

    std::optional<AnomalyEvent> feed(const TsPacket& packet, uint64_t packet_index);

private:
    uint16_t pid_;
    bool have_prev_ = false;
    uint8_t prev_cc_ = 0;
    bool dup_seen_ = false;
    bool suppress_ = false;
};

/// Batch form over one PID's packets in stream order.
std::vector<AnomalyEvent> check_continuity(std::span<const TsPacket> packets,
                                           uint64_t first_index = 0);

struct PidStats {
    uint16_t pid = 0;
    uint64_t packet_count = 0;
    PidClass cls;
    uint64_t tei_count = 0;
    uint64_t priority_count = 0;
    uint8_t first_cc = 0;
    uint8_t last_cc = 0;
    uint64_t pcr_count = 0;
    uint8_t first_afc = 0;
    std::optional<uint64_t> first_pcr;
    uint64_t first_seen_index = 0;
    uint64_t pes_complete = 0; // reassembled PES units (ES PIDs only)

    bool operator==(const PidStats&) const = default;
};

/// stream_type -> coarse class, per the MPEG/DVB registries.
PidClassKind class_for_stream_type(uint8_t stream_type);

/// Total classification of every observed PID given the decoded tables.
std::map<uint16_t, PidClass> classify_pids(const std::optional<PatTable>& pat,
                                           const std::vector<PmtTable>& pmts,
                                           const std::set<uint16_t>& observed_pids);

struct PcrObservation {
    uint64_t byte_position = 0;
    uint64_t pcr = 0; // 27 MHz ticks

    bool operator==(const PcrObservation&) const = default;
};

struct BitrateEstimate {
    double bps = 0.0;                 // first-to-last observation
    std::vector<double> interval_bps; // per consecutive pair, skipped intervals omitted
    uint64_t skipped_intervals = 0;   // non-monotonic after unrolling
};

/// PCR-based mux rate: (delta bytes * 8) * 27e6 / delta ticks, after
/// unrolling 33-bit base wraparound. Throws Errc::insufficient_pcrs on
/// fewer than two usable observations.
BitrateEstimate estimate_bitrate(std::span<const PcrObservation> observations);

struct PsiRow {
    uint64_t index = 0; // ordinal, first-appearance order
    uint16_t pid = 0;
    SiKind kind = SiKind::Other;
    uint8_t table_id = 0;
    uint16_t section_length = 0;
    std::optional<uint8_t> version; // absent for short-form sections
    uint8_t section_number = 0;
    uint64_t first_packet_index = 0;
    uint64_t occurrences = 0;

    bool operator==(const PsiRow&) const = default;
};

struct ClassSummary {
    uint64_t video = 0;
    uint64_t audio = 0;
    uint64_t signaling = 0;
    uint64_t private_data = 0;
    uint64_t null_pids = 0;
    uint64_t unreferenced = 0;

    uint64_t other() const { return private_data + null_pids + unreferenced; }

    bool operator==(const ClassSummary&) const = default;
};

struct StreamReport {
    FrameAlignment alignment;
    uint64_t total_packets = 0;
    std::vector<PidStats> packet_table; // first-appearance order
    std::vector<PsiRow> psi_table;      // first-appearance order
    std::optional<PatTable> pat;
    std::vector<PmtTable> pmts; // PAT order
    std::vector<AnomalyEvent> anomalies;
    std::optional<double> bitrate_bps;
    ClassSummary summary; // distinct PIDs per class

    bool operator==(const StreamReport&) const = default;
};

class PesAssembler;  // demux.hpp
class AlignedReader; // ingest.hpp

/// Single-pass stream analysis: drives section assembly on signaling
/// PIDs, continuity checks everywhere, PES counting on elementary PIDs,
/// and PCR collection for the bitrate estimate.
class StreamAnalyzer {
public:
    StreamAnalyzer();
    ~StreamAnalyzer();
    StreamAnalyzer(StreamAnalyzer&&) noexcept;
    StreamAnalyzer& operator=(StreamAnalyzer&&) noexcept;

    void set_alignment(const FrameAlignment& alignment);
    void feed_frame(std::span<const uint8_t> frame, uint64_t byte_offset);
    void note_sync_loss(uint64_t byte_offset);

    uint64_t packets_seen() const;
    uint64_t anomalies_seen() const;

    /// Finalizes classification and builds the report. The analyzer is
    /// spent afterwards.
    StreamReport finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Drains a framed source through an analyzer, forwarding sync losses.
StreamReport analyze_reader(AlignedReader& reader);

/// Convenience: align and analyze an in-memory stream.
StreamReport analyze_bytes(std::span<const uint8_t> stream,
                           int requested_packet_size = 0 /* 0 = auto */);

} // namespace tskit
