#include "tskit/demux.hpp"

#include "tskit/genstream.hpp"
#include "tskit/ingest.hpp"

#include <doctest.h>

#include <random>

using namespace tskit;

namespace {

TsPacket pes_packet(uint16_t pid, bool unit_start, uint8_t cc, std::vector<uint8_t> payload) {
    TsPacket pkt;
    pkt.pid = pid;
    pkt.payload_unit_start_indicator = unit_start;
    pkt.continuity_counter = cc;
    if (payload.size() == 184) {
        pkt.adaptation_field_control = 1;
    } else {
        pkt.adaptation_field_control = 3;
        AdaptationField af;
        af.length = static_cast<uint8_t>(183 - payload.size());
        if (af.length > 0)
            af.stuffing_bytes = static_cast<uint8_t>(af.length - 1);
        pkt.adaptation = af;
    }
    pkt.payload = std::move(payload);
    return pkt;
}

std::vector<uint8_t> pes_unit(uint8_t stream_id, std::span<const uint8_t> es_bytes) {
    std::vector<uint8_t> unit{0x00, 0x00, 0x01, stream_id};
    uint16_t declared = static_cast<uint16_t>(3 + es_bytes.size());
    unit.push_back(static_cast<uint8_t>(declared >> 8));
    unit.push_back(static_cast<uint8_t>(declared & 0xFF));
    unit.push_back(0x80);
    unit.push_back(0x00);
    unit.push_back(0x00);
    unit.insert(unit.end(), es_bytes.begin(), es_bytes.end());
    return unit;
}

} // namespace

TEST_CASE("single-packet bounded PES") {
    // 00 00 01 C0 00 08 + 8 header/data bytes in one packet
    std::vector<uint8_t> payload{0x00, 0x00, 0x01, 0xC0, 0x00, 0x08,
                                 0x80, 0x00, 0x00, 0xDE, 0xAD, 0xBE, 0xEF, 0x99};
    std::vector<TsPacket> packets{pes_packet(520, true, 0, payload)};
    auto units = extract_pes(packets);
    REQUIRE(units.size() == 1);
    CHECK(units[0].stream_id == 0xC0);
    CHECK(units[0].declared_length == 8);
    CHECK(units[0].complete);
    CHECK(units[0].payload == std::vector<uint8_t>{0xDE, 0xAD, 0xBE, 0xEF, 0x99});
}

TEST_CASE("unit start without the start code is an anomaly") {
    std::vector<uint8_t> payload{0x47, 0x11, 0x22, 0x33};
    std::vector<TsPacket> packets{pes_packet(520, true, 0, payload)};
    PesAssembler assembler(520);
    CHECK(assembler.feed(packets[0], 0).empty());
    CHECK_FALSE(assembler.finish().has_value());
    REQUIRE(assembler.anomalies().size() == 1);
    CHECK(assembler.anomalies()[0].kind == AnomalyKind::PesStartMissing);
}

TEST_CASE("PES spanning packets reassembles byte-identically") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        size_t n_units = 1 + rng() % 5;
        std::vector<std::vector<uint8_t>> es_payloads;
        std::vector<TsPacket> packets;
        uint8_t cc = 0;
        for (size_t u = 0; u < n_units; ++u) {
            std::vector<uint8_t> es(1 + rng() % 700);
            for (auto& b : es)
                b = static_cast<uint8_t>(rng());
            es_payloads.push_back(es);
            auto unit = pes_unit(0xE0, es);
            for (size_t pos = 0; pos < unit.size(); pos += 184) {
                size_t chunk = std::min<size_t>(184, unit.size() - pos);
                packets.push_back(pes_packet(
                    33, pos == 0, cc++,
                    std::vector<uint8_t>(unit.begin() + pos, unit.begin() + pos + chunk)));
            }
        }
        auto units = extract_pes(packets);
        REQUIRE(units.size() == n_units);
        for (size_t u = 0; u < n_units; ++u) {
            CHECK(units[u].complete);
            CHECK(units[u].payload == es_payloads[u]);
        }
    }
}

TEST_CASE("unbounded PES terminates at the next unit start") {
    auto unit = pes_unit(0xE0, std::vector<uint8_t>(300, 0x42));
    unit[4] = 0; // declared_length 0: unbounded
    unit[5] = 0;
    std::vector<TsPacket> packets;
    uint8_t cc = 0;
    for (size_t pos = 0; pos < unit.size(); pos += 184) {
        size_t chunk = std::min<size_t>(184, unit.size() - pos);
        packets.push_back(pes_packet(
            34, pos == 0, cc++,
            std::vector<uint8_t>(unit.begin() + pos, unit.begin() + pos + chunk)));
    }
    auto next = pes_unit(0xE0, std::vector<uint8_t>(10, 0x43));
    packets.push_back(pes_packet(34, true, cc++, next));

    auto units = extract_pes(packets);
    REQUIRE(units.size() == 2);
    CHECK(units[0].declared_length == 0);
    CHECK(units[0].complete); // closed by the next unit start
    CHECK(units[0].payload == std::vector<uint8_t>(300, 0x42));
    CHECK(units[1].complete);

    // end-of-stream leaves the trailing unbounded unit incomplete
    packets.pop_back();
    auto trailing = extract_pes(packets);
    REQUIRE(trailing.size() == 1);
    CHECK_FALSE(trailing[0].complete);
}

TEST_CASE("demux to sinks matches ground truth per PID") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 500;
    Generated generated = generate(spec);

    std::map<uint16_t, VectorSink*> sinks;
    std::vector<std::unique_ptr<VectorSink>> owned;

    MemorySource source(generated.bytes);
    AlignedReader reader(source);
    DemuxSelection selection;
    selection.all_es = true;
    // sinks outlive the demux call so their contents can be inspected
    struct Forward : ByteSink {
        VectorSink* target;
        explicit Forward(VectorSink* t) : target(t) {}
        bool write(std::span<const uint8_t> bytes) override { return target->write(bytes); }
    };
    auto summaries = demux_to_sinks(reader, selection, [&](uint16_t pid) -> std::unique_ptr<ByteSink> {
        auto sink = std::make_unique<VectorSink>();
        sinks[pid] = sink.get();
        owned.push_back(std::move(sink));
        return std::make_unique<Forward>(sinks[pid]);
    });

    REQUIRE(summaries.size() == 5);
    for (const auto& [pid, summary] : summaries) {
        REQUIRE(generated.truth.es_payload_bytes.count(pid));
        CHECK(summary.seen);
        CHECK_FALSE(summary.write_failed);
        CHECK(summary.bytes == generated.truth.es_payload_bytes.at(pid));
        CHECK(summary.pes_count == generated.truth.pes_complete.at(pid));
        CHECK(sinks.at(pid)->data.size() == summary.bytes);
    }
}

TEST_CASE("empty selection reads the stream and writes nothing") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 200;
    Generated generated = generate(spec);

    MemorySource source(generated.bytes);
    AlignedReader reader(source);
    DemuxSelection selection; // explicit empty set
    selection.all_es = false;
    selection.pids = {};
    bool factory_used = false;
    auto summaries = demux_to_sinks(reader, selection, [&](uint16_t) {
        factory_used = true;
        return std::make_unique<VectorSink>();
    });
    CHECK(summaries.empty());
    CHECK_FALSE(factory_used);
    CHECK(reader.frames_delivered() == generated.truth.total_packets);
}

TEST_CASE("selected-but-absent PIDs are flagged") {
    StreamSpec spec = builtin_demo_spec();
    spec.duration_ms = 200;
    Generated generated = generate(spec);

    MemorySource source(generated.bytes);
    AlignedReader reader(source);
    DemuxSelection selection;
    selection.pids = {520, 4000};
    auto summaries = demux_to_sinks(reader, selection,
                                    [&](uint16_t) { return std::make_unique<VectorSink>(); });
    REQUIRE(summaries.count(4000) == 1);
    CHECK_FALSE(summaries.at(4000).seen);
    CHECK(summaries.at(520).seen);
    CHECK(summaries.at(520).bytes == generated.truth.es_payload_bytes.at(520));
}

TEST_CASE("default output naming") {
    CHECK(default_es_path("capture.ts", 520).filename() == "capture_pid520.es");
    CHECK(default_es_path("/tmp/x/input.trp", 33).string() == "/tmp/x/input_pid33.es");
}
