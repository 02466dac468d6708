#include "tskit/ingest.hpp"

#include "tskit/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace tskit {

FileSource::FileSource(const std::filesystem::path& path) {
    file_ = std::fopen(path.c_str(), "rb");
    if (!file_)
        raise(Errc::source_unavailable, "cannot open " + path.string() + ": " + std::strerror(errno));
}

FileSource::~FileSource() {
    if (file_)
        std::fclose(file_);
}

size_t FileSource::read(uint8_t* dst, size_t max) {
    return std::fread(dst, 1, max, file_);
}

size_t MemorySource::read(uint8_t* dst, size_t max) {
    size_t n = std::min(max, data_.size() - pos_);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
    return n;
}

UdpSource::UdpSource(const std::string& bind_address, uint16_t port,
                     const std::string& multicast_group, UdpOptions options)
    : options_(options) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0)
        raise(Errc::source_unavailable, std::string("socket: ") + std::strerror(errno));

    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (bind_address.empty() || bind_address == "*") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
    } else if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        fd_ = -1;
        raise(Errc::source_unavailable, "bad bind address: " + bind_address);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int err = errno;
        ::close(fd_);
        fd_ = -1;
        raise(Errc::source_unavailable, std::string("bind: ") + std::strerror(err));
    }

    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    bound_port_ = ntohs(bound.sin_port);

    if (!multicast_group.empty()) {
        ip_mreq mreq{};
        if (::inet_pton(AF_INET, multicast_group.c_str(), &mreq.imr_multiaddr) != 1) {
            ::close(fd_);
            fd_ = -1;
            raise(Errc::source_unavailable, "bad multicast group: " + multicast_group);
        }
        mreq.imr_interface.s_addr = htonl(INADDR_ANY);
        if (::setsockopt(fd_, IPPROTO_IP, IP_ADD_MEMBERSHIP, &mreq, sizeof(mreq)) != 0) {
            int err = errno;
            ::close(fd_);
            fd_ = -1;
            raise(Errc::source_unavailable, std::string("multicast join: ") + std::strerror(err));
        }
    }
}

UdpSource::~UdpSource() {
    if (fd_ >= 0)
        ::close(fd_);
}

size_t UdpSource::read(uint8_t* dst, size_t max) {
    using clock = std::chrono::steady_clock;
    if (!started_) {
        started_ = true;
        start_ = clock::now();
        last_data_ = start_;
    }
    for (;;) {
        if (options_.stop && options_.stop->load())
            return 0;
        if (options_.max_bytes && bytes_ >= *options_.max_bytes)
            return 0;

        auto now = clock::now();
        int wait_ms = 100;
        if (options_.duration_s) {
            auto deadline = start_ + std::chrono::duration_cast<clock::duration>(
                                         std::chrono::duration<double>(*options_.duration_s));
            if (now >= deadline)
                return 0;
            auto until = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
            wait_ms = std::min<long long>(wait_ms, std::max<long long>(1, until.count()));
        }
        if (options_.idle_timeout_ms >= 0) {
            auto idle =
                std::chrono::duration_cast<std::chrono::milliseconds>(now - last_data_).count();
            if (idle >= options_.idle_timeout_ms)
                return 0;
            wait_ms = std::min<long long>(wait_ms, options_.idle_timeout_ms - idle + 1);
        }

        pollfd pfd{fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, wait_ms);
        if (rc < 0) {
            if (errno == EINTR)
                continue;
            raise(Errc::source_unavailable, std::string("poll: ") + std::strerror(errno));
        }
        if (rc == 0)
            continue;

        ssize_t n = ::recv(fd_, dst, max, 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN)
                continue;
            raise(Errc::source_unavailable, std::string("recv: ") + std::strerror(errno));
        }
        if (n == 0)
            continue; // zero-length datagram
        datagrams_ += 1;
        bytes_ += static_cast<uint64_t>(n);
        last_data_ = clock::now();
        if (options_.max_bytes && bytes_ > *options_.max_bytes) {
            // trim overshoot so the delivered byte count honors the budget
            uint64_t over = bytes_ - *options_.max_bytes;
            n -= static_cast<ssize_t>(over);
            bytes_ = *options_.max_bytes;
        }
        return static_cast<size_t>(n);
    }
}

AlignedReader::AlignedReader(ByteSource& source, ReaderOptions options)
    : source_(source), options_(options) {
    if (options_.packet_size != 0 && options_.packet_size != kPacketSize &&
        options_.packet_size != kRsPacketSize)
        raise(Errc::bad_config, "packet_size must be 0, 188 or 204");
    buffer_.reserve(64 * 1024);
}

bool AlignedReader::fill(size_t want) {
    while (!source_eof_ && buffer_.size() - pos_ < want) {
        size_t chunk = std::max<size_t>(want, 64 * 1024);
        size_t old = buffer_.size();
        buffer_.resize(old + chunk);
        size_t got = source_.read(buffer_.data() + old, chunk);
        buffer_.resize(old + got);
        if (got == 0)
            source_eof_ = true;
    }
    return buffer_.size() - pos_ >= want;
}

void AlignedReader::compact() {
    if (pos_ > (1u << 20)) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + pos_);
        base_offset_ += pos_;
        pos_ = 0;
    }
}

namespace {

// Offset-major scan; the probe is clamped to the frames that actually
// fit but never below min_probe. min_probe = probe_window keeps weak
// locks out while more input may still arrive; 1 accepts short tails at
// end of stream.
std::optional<FrameAlignment> relaxed_scan(std::span<const uint8_t> data, int probe_window,
                                           int forced_size, int min_probe) {
    if (data.size() < kPacketSize)
        return std::nullopt;
    size_t last = data.size() - kPacketSize;
    auto try_size = [&](size_t offset, int size) -> bool {
        int fits = static_cast<int>((data.size() - offset) / size);
        if (fits < std::min(min_probe, probe_window))
            return false;
        int probe = std::min(probe_window, fits);
        for (int k = 0; k < probe; ++k)
            if (data[offset + static_cast<size_t>(k) * size] != kSyncByte)
                return false;
        return true;
    };
    for (size_t offset = 0; offset <= last; ++offset) {
        if (data[offset] != kSyncByte)
            continue;
        if (forced_size != 0) {
            if (try_size(offset, forced_size))
                return FrameAlignment{offset, forced_size};
            continue;
        }
        bool ok188 = try_size(offset, kPacketSize);
        bool ok204 = try_size(offset, kRsPacketSize);
        int conf188 = std::min<int>(probe_window, (data.size() - offset) / kPacketSize);
        // a one-frame 188 match is weaker evidence than any 204 match
        if (ok188 && (conf188 >= 2 || !ok204))
            return FrameAlignment{offset, kPacketSize};
        if (ok204)
            return FrameAlignment{offset, kRsPacketSize};
    }
    return std::nullopt;
}

} // namespace

bool AlignedReader::acquire_initial() {
    const size_t strict_need =
        static_cast<size_t>(options_.probe_window) * kRsPacketSize + kRsPacketSize;
    const size_t max_window = options_.scan_limit + strict_need;
    for (;;) {
        size_t have = buffer_.size() - pos_;
        if (!source_eof_ && have < max_window)
            fill(std::min(max_window, have + (64u << 10)));
        std::span<const uint8_t> avail(buffer_.data() + pos_, buffer_.size() - pos_);
        if (avail.size() > max_window)
            avail = avail.subspan(0, max_window);

        std::optional<FrameAlignment> lock;
        if (options_.packet_size == 0 && avail.size() >= strict_need) {
            try {
                lock = resync(avail, options_.probe_window);
            } catch (const Error& e) {
                if (e.code() != Errc::no_sync_found)
                    throw;
            }
        } else {
            lock = relaxed_scan(avail, options_.probe_window, options_.packet_size,
                                source_eof_ ? 1 : options_.probe_window);
        }
        if (lock && lock->offset <= options_.scan_limit) {
            alignment_ = {base_offset_ + pos_ + lock->offset, lock->packet_size};
            pos_ += lock->offset;
            aligned_ = true;
            return true;
        }
        if (source_eof_) {
            if (base_offset_ == 0 && buffer_.empty())
                return false; // empty stream, not an error
            raise(Errc::no_sync_found, "no sync lock before end of stream");
        }
        if (buffer_.size() - pos_ >= max_window)
            raise(Errc::no_sync_found, "no sync lock within scan limit");
    }
}

bool AlignedReader::reacquire(uint64_t loss_offset) {
    losses_.push_back(loss_offset);
    const int size = alignment_.packet_size;
    size_t searched = 0;
    for (;;) {
        fill(static_cast<size_t>(size) * (options_.probe_window + 1) + searched);
        std::span<const uint8_t> avail(buffer_.data() + pos_, buffer_.size() - pos_);
        auto found = resync_at_size(avail, size, options_.probe_window);
        if (found) {
            pos_ += *found;
            return true;
        }
        searched = avail.size();
        if (source_eof_) {
            pos_ = buffer_.size(); // drain the unusable tail
            return false;
        }
        if (searched > options_.scan_limit)
            raise(Errc::no_sync_found, "sync not recovered within scan limit");
    }
}

std::optional<Frame> AlignedReader::next() {
    if (finished_)
        return std::nullopt;
    if (!aligned_) {
        if (!acquire_initial()) {
            finished_ = true;
            return std::nullopt;
        }
    }
    compact();
    for (;;) {
        size_t size = static_cast<size_t>(alignment_.packet_size);
        if (!fill(size)) {
            finished_ = true;
            return std::nullopt;
        }
        if (buffer_[pos_] == kSyncByte) {
            Frame frame;
            frame.index = frames_++;
            frame.source_offset = base_offset_ + pos_;
            frame.data = std::span<const uint8_t>(buffer_.data() + pos_, size);
            pos_ += size;
            return frame;
        }
        if (!reacquire(base_offset_ + pos_)) {
            finished_ = true;
            return std::nullopt;
        }
    }
}

CaptureSummary capture_to_file(UdpSource& source, const std::filesystem::path& sink_path) {
    std::FILE* out = std::fopen(sink_path.c_str(), "wb");
    if (!out)
        raise(Errc::sink_write_failure,
              "cannot open " + sink_path.string() + ": " + std::strerror(errno));

    CaptureSummary summary;
    std::vector<uint8_t> buf(64 * 1024);
    for (;;) {
        size_t n = source.read(buf.data(), buf.size());
        if (n == 0)
            break;
        if (std::fwrite(buf.data(), 1, n, out) != n) {
            std::fclose(out);
            raise(Errc::sink_write_failure, "short write to " + sink_path.string());
        }
        summary.bytes += n;
    }
    std::fclose(out);
    summary.datagrams = source.datagrams_received();
    summary.packets = summary.bytes / kPacketSize;
    return summary;
}

} // namespace tskit
