#pragma once

#include "tskit/packet.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tskit {

/// Pull interface for raw bytes. read() fills up to `max` bytes and
/// returns the count; 0 means end of stream.
class ByteSource {
public:
    virtual ~ByteSource() = default;
    virtual size_t read(uint8_t* dst, size_t max) = 0;
};

class FileSource : public ByteSource {
public:
    explicit FileSource(const std::filesystem::path& path);
    ~FileSource() override;
    size_t read(uint8_t* dst, size_t max) override;

private:
    std::FILE* file_ = nullptr;
};

class MemorySource : public ByteSource {
public:
    explicit MemorySource(std::span<const uint8_t> data) : data_(data) {}
    size_t read(uint8_t* dst, size_t max) override;

private:
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

struct UdpOptions {
    std::optional<double> duration_s;   // stop this long after the first read call
    std::optional<uint64_t> max_bytes;  // stop once this many bytes were delivered
    int idle_timeout_ms = -1;           // stop after silence this long (-1 = never)
    std::atomic<bool>* stop = nullptr;  // external interrupt
};

/// Plain UDP datagram source (unicast or multicast). Datagram payloads
/// are delivered in arrival order; framing happens downstream.
class UdpSource : public ByteSource {
public:
    UdpSource(const std::string& bind_address, uint16_t port,
              const std::string& multicast_group = "", UdpOptions options = {});
    ~UdpSource() override;

    size_t read(uint8_t* dst, size_t max) override;

    uint16_t bound_port() const { return bound_port_; }
    uint64_t datagrams_received() const { return datagrams_; }
    uint64_t bytes_received() const { return bytes_; }

private:
    int fd_ = -1;
    uint16_t bound_port_ = 0;
    UdpOptions options_;
    uint64_t datagrams_ = 0;
    uint64_t bytes_ = 0;
    bool started_ = false;
    std::chrono::steady_clock::time_point start_{};
    std::chrono::steady_clock::time_point last_data_{};
};

struct ReaderOptions {
    int packet_size = 0;    // 0 = auto-detect 188/204
    int probe_window = 5;   // consecutive frames to confirm a lock
    size_t scan_limit = 1 << 20; // bytes searched before NoSyncFound
};

struct Frame {
    uint64_t index = 0;         // 0-based across the whole session
    uint64_t source_offset = 0; // byte position of the frame start
    std::span<const uint8_t> data; // valid until the next next() call
};

/// Frames a byte source into fixed-size packets: initial sync
/// acquisition, then per-frame sync verification with re-acquisition on
/// loss. Buffers are bounded regardless of stream length.
class AlignedReader {
public:
    explicit AlignedReader(ByteSource& source, ReaderOptions options = {});

    /// Next frame, or nullopt at end of stream. Throws
    /// Errc::no_sync_found if a lock cannot be (re)established within
    /// the scan limit.
    std::optional<Frame> next();

    bool aligned() const { return aligned_; }
    const FrameAlignment& alignment() const { return alignment_; }

    /// Byte offsets at which mid-stream sync was lost.
    const std::vector<uint64_t>& sync_loss_offsets() const { return losses_; }
    uint64_t frames_delivered() const { return frames_; }

private:
    bool fill(size_t want);
    void compact();
    bool acquire_initial();
    bool reacquire(uint64_t loss_offset);

    ByteSource& source_;
    ReaderOptions options_;
    std::vector<uint8_t> buffer_;
    size_t pos_ = 0;           // consumption index into buffer_
    uint64_t base_offset_ = 0; // source offset of buffer_[0]
    bool source_eof_ = false;
    bool aligned_ = false;
    bool finished_ = false;
    FrameAlignment alignment_;
    std::vector<uint64_t> losses_;
    uint64_t frames_ = 0;
};

struct CaptureSummary {
    uint64_t bytes = 0;
    uint64_t datagrams = 0;
    uint64_t packets = 0; // bytes / 188, informational

    bool operator==(const CaptureSummary&) const = default;
};

/// Persists a UDP stream to disk unmodified.
CaptureSummary capture_to_file(UdpSource& source, const std::filesystem::path& sink_path);

} // namespace tskit
