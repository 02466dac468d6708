#pragma once

#include "tskit/analysis.hpp"
#include "tskit/packet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

namespace tskit {

/// One packetized-elementary-stream unit. payload holds the ES bytes
/// after the PES header; declared_length 0 means unbounded (video),
/// terminated by the next unit start or end of stream.
struct PesPacket {
    uint8_t stream_id = 0;
    uint16_t declared_length = 0;
    std::vector<uint8_t> payload;
    bool complete = false;

    bool operator==(const PesPacket&) const = default;
};

/// Reassembles PES units from one PID's packets in stream order.
class PesAssembler {
public:
    explicit PesAssembler(uint16_t pid) : pid_(pid) {}

    /// Returns the PES units completed by this packet.
    std::vector<PesPacket> feed(const TsPacket& packet, uint64_t packet_index);

    /// End of stream: the trailing unit, if one is open, with complete=false.
    std::optional<PesPacket> finish();

    const std::vector<AnomalyEvent>& anomalies() const { return anomalies_; }
    uint64_t complete_count() const { return complete_count_; }
    uint64_t payload_bytes() const { return payload_bytes_; }

private:
    void close_current(bool complete);
    void consume(std::span<const uint8_t> bytes);

    uint16_t pid_;
    bool open_ = false;
    bool header_done_ = false;
    std::vector<uint8_t> head_; // PES header bytes while being sized
    uint8_t stream_id_ = 0;
    uint16_t declared_length_ = 0;
    size_t body_remaining_ = 0; // when bounded: PES bytes still expected
    size_t header_skip_ = 0;    // optional-header bytes still to skip
    std::vector<uint8_t> payload_;
    std::vector<PesPacket> out_;
    std::vector<AnomalyEvent> anomalies_;
    uint64_t complete_count_ = 0;
    uint64_t payload_bytes_ = 0;
};

/// Batch reassembly over one PID's packet list; the trailing partial
/// unit, if any, is appended with complete=false.
std::vector<PesPacket> extract_pes(std::span<const TsPacket> packets);

/// Where demuxed ES bytes go. write returns false on failure; the PID is
/// then abandoned but other PIDs continue.
class ByteSink {
public:
    virtual ~ByteSink() = default;
    virtual bool write(std::span<const uint8_t> bytes) = 0;
};

class FileSink : public ByteSink {
public:
    explicit FileSink(const std::filesystem::path& path);
    ~FileSink() override;
    bool write(std::span<const uint8_t> bytes) override;

private:
    std::FILE* file_ = nullptr;
};

class VectorSink : public ByteSink {
public:
    bool write(std::span<const uint8_t> bytes) override {
        data.insert(data.end(), bytes.begin(), bytes.end());
        return true;
    }
    std::vector<uint8_t> data;
};

struct DemuxSelection {
    bool all_es = false;         // every elementary PID announced by the PMTs
    std::set<uint16_t> pids;     // explicit set otherwise
};

struct SinkSummary {
    uint64_t bytes = 0;
    uint64_t pes_count = 0;
    bool write_failed = false;
    bool seen = false; // false for selected-but-absent PIDs
};

using SinkFactory = std::function<std::unique_ptr<ByteSink>(uint16_t pid)>;

/// Default output name for an extracted PID: `<input-stem>_pid<decimal>.es`
/// next to the input file.
std::filesystem::path default_es_path(const std::filesystem::path& input, uint16_t pid);

class AlignedReader; // ingest.hpp

/// Streams the input once, reassembles PES on the selected PIDs and
/// writes their ES bytes to sinks in stream order.
std::map<uint16_t, SinkSummary> demux_to_sinks(AlignedReader& reader,
                                               const DemuxSelection& selection,
                                               const SinkFactory& make_sink);

} // namespace tskit
