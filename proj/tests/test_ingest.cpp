#include "tskit/ingest.hpp"

#include "tskit/analysis.hpp"
#include "tskit/errors.hpp"
#include "tskit/genstream.hpp"

#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace tskit;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> junk(size_t count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<uint8_t> out(count);
    for (auto& b : out) {
        b = static_cast<uint8_t>(rng());
        if (b == 0x47)
            b = 0x48;
    }
    return out;
}

std::vector<std::vector<uint8_t>> collect_frames(AlignedReader& reader) {
    std::vector<std::vector<uint8_t>> frames;
    while (auto frame = reader.next())
        frames.emplace_back(frame->data.begin(), frame->data.end());
    return frames;
}

void send_datagrams(uint16_t port, std::span<const uint8_t> bytes, size_t datagram_size) {
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    REQUIRE(fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    for (size_t pos = 0; pos < bytes.size(); pos += datagram_size) {
        size_t n = std::min(datagram_size, bytes.size() - pos);
        ::sendto(fd, bytes.data() + pos, n, 0, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
        if (pos / datagram_size % 64 == 63)
            std::this_thread::sleep_for(std::chrono::milliseconds(1)); // let the receiver drain
    }
    ::close(fd);
}

} // namespace

TEST_CASE("clean file yields every frame at offset zero") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 200;
    Generated generated = generate(spec);
    auto path = temp_path("tskit_clean.ts");
    write_file(path, generated.bytes);

    FileSource source(path);
    AlignedReader reader(source);
    auto frames = collect_frames(reader);
    CHECK(frames.size() == generated.truth.total_packets);
    CHECK(reader.alignment().offset == 0);
    CHECK(reader.alignment().packet_size == 188);
    CHECK(reader.sync_loss_offsets().empty());
    std::filesystem::remove(path);
}

TEST_CASE("missing file is a source error") {
    CHECK_THROWS_AS(FileSource("/nonexistent/path.ts"), Error);
}

TEST_CASE("leading garbage and a mid-stream insertion recover with one loss") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 300;
    Generated generated = generate(spec);

    auto garbage = junk(10, 4242);
    std::vector<uint8_t> mangled = garbage;
    size_t cut = (generated.truth.total_packets / 2) * 188;
    mangled.insert(mangled.end(), generated.bytes.begin(), generated.bytes.begin() + cut);
    auto mid = junk(3, 77);
    mangled.insert(mangled.end(), mid.begin(), mid.end());
    mangled.insert(mangled.end(), generated.bytes.begin() + cut, generated.bytes.end());

    MemorySource source(mangled);
    AlignedReader reader(source);
    auto frames = collect_frames(reader);
    CHECK(frames.size() == generated.truth.total_packets);
    CHECK(reader.alignment().offset == 10);
    REQUIRE(reader.sync_loss_offsets().size() == 1);
    CHECK(reader.sync_loss_offsets()[0] == 10 + cut);

    // frames replay the original packets losslessly
    for (size_t i = 0; i < frames.size(); ++i)
        CHECK(std::equal(frames[i].begin(), frames[i].end(),
                         generated.bytes.begin() + i * 188));
}

TEST_CASE("never yields a frame without the sync byte") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 200;
    Generated generated = generate(spec);
    std::vector<uint8_t> mangled = generated.bytes;
    std::mt19937_64 rng(99);
    for (int i = 0; i < 5; ++i)
        mangled[rng() % mangled.size()] ^= 0xFF; // random corruption
    MemorySource source(mangled);
    AlignedReader reader(source);
    while (auto frame = reader.next())
        CHECK(frame->data[0] == 0x47);
}

TEST_CASE("empty input produces no frames and no error") {
    MemorySource source({});
    AlignedReader reader(source);
    CHECK_FALSE(reader.next().has_value());
}

TEST_CASE("garbage-only input raises no_sync_found") {
    auto bytes = junk(50000, 5);
    MemorySource source(bytes);
    AlignedReader reader(source);
    CHECK_THROWS_AS(reader.next(), Error);
}

TEST_CASE("204 alignment is detected and kept through recovery") {
    StreamSpec spec = builtin_demo_spec();
    spec.packet_size = 204;
    spec.target_bitrate_bps = 2'400'000; // parity overhead needs headroom
    spec.duration_ms = 300;
    Generated generated = generate(spec);

    std::vector<uint8_t> mangled = junk(9, 31);
    size_t cut = (generated.truth.total_packets / 2) * 204;
    mangled.insert(mangled.end(), generated.bytes.begin(), generated.bytes.begin() + cut);
    auto mid = junk(3, 32);
    mangled.insert(mangled.end(), mid.begin(), mid.end());
    mangled.insert(mangled.end(), generated.bytes.begin() + cut, generated.bytes.end());

    MemorySource source(mangled);
    AlignedReader reader(source);
    auto frames = collect_frames(reader);
    CHECK(reader.alignment().packet_size == 204);
    CHECK(reader.alignment().offset == 9);
    CHECK(frames.size() == generated.truth.total_packets);
    CHECK(reader.sync_loss_offsets().size() == 1);
}

TEST_CASE("forced packet size skips auto-detection") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 200;
    Generated generated = generate(spec);
    MemorySource source(generated.bytes);
    ReaderOptions options;
    options.packet_size = 188;
    AlignedReader reader(source, options);
    auto frames = collect_frames(reader);
    CHECK(frames.size() == generated.truth.total_packets);
}

TEST_CASE("UDP loopback delivers the same frames as the file path") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 300;
    Generated generated = generate(spec);

    UdpOptions options;
    options.idle_timeout_ms = 500;
    options.max_bytes = generated.bytes.size();
    UdpSource receiver("127.0.0.1", 0, "", options);
    uint16_t port = receiver.bound_port();

    std::thread sender([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        send_datagrams(port, generated.bytes, 7 * 188);
    });

    AlignedReader reader(receiver);
    auto frames = collect_frames(reader);
    sender.join();

    REQUIRE(frames.size() == generated.truth.total_packets);
    for (size_t i = 0; i < frames.size(); ++i)
        CHECK(std::equal(frames[i].begin(), frames[i].end(),
                         generated.bytes.begin() + i * 188));
}

TEST_CASE("capture_to_file persists the stream byte-identically") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 250;
    Generated generated = generate(spec);

    UdpOptions options;
    options.idle_timeout_ms = 500;
    options.max_bytes = generated.bytes.size();
    UdpSource receiver("127.0.0.1", 0, "", options);
    uint16_t port = receiver.bound_port();

    std::thread sender([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        send_datagrams(port, generated.bytes, 7 * 188);
    });

    auto path = temp_path("tskit_capture.ts");
    CaptureSummary summary = capture_to_file(receiver, path);
    sender.join();

    CHECK(summary.bytes == generated.bytes.size());
    CHECK(summary.packets == generated.truth.total_packets);

    std::ifstream in(path, std::ios::binary);
    std::vector<uint8_t> captured((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    CHECK(captured == generated.bytes);
    std::filesystem::remove(path);
}

TEST_CASE("zero-byte capture budget produces an empty file") {
    UdpOptions options;
    options.max_bytes = 0;
    options.idle_timeout_ms = 100;
    UdpSource receiver("127.0.0.1", 0, "", options);
    auto path = temp_path("tskit_capture_empty.ts");
    CaptureSummary summary = capture_to_file(receiver, path);
    CHECK(summary.bytes == 0);
    CHECK(summary.packets == 0);
    CHECK(std::filesystem::file_size(path) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("analysis over UDP equals analysis of the file") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 300;
    Generated generated = generate(spec);

    StreamReport from_file = analyze_bytes(generated.bytes);

    UdpOptions options;
    options.idle_timeout_ms = 500;
    options.max_bytes = generated.bytes.size();
    UdpSource receiver("127.0.0.1", 0, "", options);
    uint16_t port = receiver.bound_port();
    std::thread sender([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        send_datagrams(port, generated.bytes, 7 * 188);
    });
    AlignedReader reader(receiver);
    StreamReport from_udp = analyze_reader(reader);
    sender.join();

    CHECK(from_file == from_udp);
}
