#include "tskit/psi.hpp"

#include "tskit/crc32.hpp"
#include "tskit/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace tskit;

namespace {

// Packs sections the way a mux does: pointer_field 0 in the first
// packet, continuation packets without unit start, 0xFF stuffing.
struct PayloadFeed {
    std::vector<std::pair<bool, std::vector<uint8_t>>> packets;

    void add_section(std::span<const uint8_t> section) {
        size_t pos = 0;
        bool first = true;
        while (first || pos < section.size()) {
            std::vector<uint8_t> payload;
            if (first)
                payload.push_back(0);
            size_t take = std::min(section.size() - pos, 184 - payload.size());
            payload.insert(payload.end(), section.begin() + pos, section.begin() + pos + take);
            pos += take;
            payload.resize(184, 0xFF);
            packets.emplace_back(first, std::move(payload));
            first = false;
        }
    }
};

std::vector<PsiSection> run_feed(uint16_t pid, const PayloadFeed& feed) {
    SectionAssembler assembler(pid);
    std::vector<PsiSection> sections;
    for (const auto& [pusi, payload] : feed.packets)
        for (PsiSection& s : assembler.feed(pusi, payload))
            sections.push_back(std::move(s));
    assembler.finish();
    return sections;
}

PsiSection section_from_bytes(uint16_t pid, std::span<const uint8_t> bytes) {
    PayloadFeed feed;
    feed.add_section(bytes);
    auto sections = run_feed(pid, feed);
    REQUIRE(sections.size() == 1);
    return sections.front();
}

PatTable random_pat(std::mt19937_64& rng) {
    PatTable pat;
    pat.transport_stream_id = static_cast<uint16_t>(rng());
    pat.version = static_cast<uint8_t>(rng() % 32);
    if (rng() % 2 == 0)
        pat.network_pid = static_cast<uint16_t>(16 + rng() % 16);
    int n = static_cast<int>(rng() % 6);
    uint16_t next_pid = static_cast<uint16_t>(64 + rng() % 512);
    for (int i = 0; i < n; ++i) {
        uint16_t program = static_cast<uint16_t>(1 + rng() % 0xFFFE);
        pat.programs.emplace_back(program, next_pid);
        next_pid = static_cast<uint16_t>(next_pid + 1 + rng() % 7);
    }
    return pat;
}

PmtTable random_pmt(std::mt19937_64& rng) {
    PmtTable pmt;
    pmt.program_number = static_cast<uint16_t>(1 + rng() % 0xFFFE);
    pmt.pcr_pid = static_cast<uint16_t>(32 + rng() % 1024);
    if (rng() % 3 == 0) {
        pmt.program_info.resize(rng() % 20);
        for (auto& b : pmt.program_info)
            b = static_cast<uint8_t>(rng());
    }
    int n = static_cast<int>(rng() % 5);
    uint16_t next_pid = static_cast<uint16_t>(256 + rng() % 512);
    for (int i = 0; i < n; ++i) {
        PmtStream es;
        es.stream_type = static_cast<uint8_t>(rng() % 0x30 + 1);
        es.elementary_pid = next_pid;
        next_pid = static_cast<uint16_t>(next_pid + 1 + rng() % 5);
        es.es_info.resize(rng() % 24);
        for (auto& b : es.es_info)
            b = static_cast<uint8_t>(rng());
        pmt.streams.push_back(std::move(es));
    }
    return pmt;
}

} // namespace

TEST_CASE("single PAT section on PID 0") {
    PatTable pat;
    pat.transport_stream_id = 1;
    pat.version = 0;
    pat.network_pid = 16;
    pat.programs = {{4673, 268}, {4481, 269}};
    auto bytes = encode_pat(pat);
    CHECK(bytes.size() == 24); // 3 + section_length 21

    PsiSection section = section_from_bytes(0, bytes);
    CHECK(section.table_id == 0x00);
    CHECK(section.section_length == 21);
    CHECK(section.version_number == 0);
    CHECK(section.crc_status == CrcStatus::Valid);
}

TEST_CASE("sections spanning multiple packets reassemble byte-identically") {
    std::mt19937_64 rng(5);
    std::vector<uint8_t> body(500 - 9); // section_length 500
    for (auto& b : body)
        b = static_cast<uint8_t>(rng());
    auto bytes = encode_long_section(0x42, 7, 3, 0, 0, body);
    CHECK(bytes.size() == 3u + 500u);

    PsiSection section = section_from_bytes(17, bytes);
    CHECK(section.section_length == 500);
    CHECK(section.raw == bytes);
    CHECK(section.crc_status == CrcStatus::Valid);
}

TEST_CASE("stuffing-only payload emits nothing") {
    SectionAssembler assembler(5);
    std::vector<uint8_t> payload(184, 0xFF);
    CHECK(assembler.feed(true, payload).empty());
    CHECK(assembler.feed(false, payload).empty());
    CHECK_FALSE(assembler.finish().has_value());
    CHECK(assembler.accounting().stuffing_bytes > 0);
}

TEST_CASE("corrupted CRC surfaces as Invalid, not as a parse failure") {
    PatTable pat;
    pat.programs = {{7, 100}};
    auto bytes = encode_pat(pat);
    bytes.back() ^= 0x01;
    PsiSection section = section_from_bytes(0, bytes);
    CHECK(section.crc_status == CrcStatus::Invalid);
    CHECK_THROWS_AS(parse_pat(section), Error);
}

TEST_CASE("truncated trailing section is discarded and reported") {
    PayloadFeed feed;
    std::vector<uint8_t> body(300);
    auto bytes = encode_long_section(0x40, 1, 0, 0, 0, body);
    feed.add_section(bytes);
    feed.packets.pop_back(); // drop the continuation packet

    SectionAssembler assembler(16);
    for (const auto& [pusi, payload] : feed.packets)
        CHECK(assembler.feed(pusi, payload).empty());
    auto truncated = assembler.finish();
    REQUIRE(truncated.has_value());
    CHECK(*truncated > 0);
}

TEST_CASE("byte conservation across the feed") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        PayloadFeed feed;
        int sections = 1 + static_cast<int>(rng() % 4);
        size_t section_bytes = 0;
        for (int s = 0; s < sections; ++s) {
            std::vector<uint8_t> body(rng() % 400);
            for (auto& b : body)
                b = static_cast<uint8_t>(rng());
            auto bytes = encode_long_section(0x42, 1, static_cast<uint8_t>(rng() % 32), 0, 0,
                                             body);
            section_bytes += bytes.size();
            feed.add_section(bytes);
        }
        SectionAssembler assembler(17);
        size_t fed = 0;
        size_t emitted = 0;
        for (const auto& [pusi, payload] : feed.packets) {
            fed += payload.size();
            for (const PsiSection& s : assembler.feed(pusi, payload))
                emitted += s.raw.size();
        }
        assembler.finish();
        const auto& acct = assembler.accounting();
        CHECK(acct.fed_bytes == fed);
        CHECK(emitted == section_bytes);
        CHECK(acct.section_bytes + acct.stuffing_bytes + acct.pointer_bytes +
                  acct.discarded_bytes ==
              acct.fed_bytes);
    }
}

TEST_CASE("PAT length law: 9 + 4N") {
    for (int n : {0, 1, 2, 3, 10}) {
        PatTable pat;
        pat.transport_stream_id = 99;
        for (int i = 0; i < n; ++i)
            pat.programs.emplace_back(static_cast<uint16_t>(i + 1),
                                      static_cast<uint16_t>(100 + i));
        auto bytes = encode_pat(pat);
        PsiSection section = section_from_bytes(0, bytes);
        CHECK(section.section_length == 9 + 4 * n);
        PatTable back = parse_pat(section);
        CHECK(back == pat);
    }
}

TEST_CASE("PAT with zero entries decodes to an empty map") {
    PatTable pat;
    pat.transport_stream_id = 2;
    auto section = section_from_bytes(0, encode_pat(pat));
    CHECK(section.section_length == 9);
    PatTable back = parse_pat(section);
    CHECK(back.programs.empty());
    CHECK_FALSE(back.network_pid.has_value());
}

TEST_CASE("PAT parse rejections") {
    PmtTable pmt;
    pmt.program_number = 1;
    pmt.pcr_pid = 100;
    auto pmt_section = section_from_bytes(200, encode_pmt(pmt, 0));
    CHECK_THROWS_AS(parse_pat(pmt_section), Error); // wrong table id

    PatTable pat;
    pat.programs = {{1, 100}};
    auto bytes = encode_pat(pat);
    // graft one extra body byte in, fixing lengths and CRC by hand
    std::vector<uint8_t> bad(bytes.begin(), bytes.end() - 4);
    bad.insert(bad.end() - 0, 0xAA);
    uint16_t new_len = static_cast<uint16_t>(bad.size() - 3 + 4);
    bad[1] = static_cast<uint8_t>(0xB0 | (new_len >> 8));
    bad[2] = static_cast<uint8_t>(new_len & 0xFF);
    uint32_t crc = crc32_mpeg(bad);
    bad.push_back(static_cast<uint8_t>(crc >> 24));
    bad.push_back(static_cast<uint8_t>(crc >> 16));
    bad.push_back(static_cast<uint8_t>(crc >> 8));
    bad.push_back(static_cast<uint8_t>(crc));
    PsiSection section = section_from_bytes(0, bad);
    REQUIRE(section.crc_status == CrcStatus::Valid);
    CHECK_THROWS_AS(parse_pat(section), Error); // body not a multiple of 4
}

TEST_CASE("PAT encode/parse round trip") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        PatTable pat = random_pat(rng);
        PsiSection section = section_from_bytes(0, encode_pat(pat));
        CHECK(parse_pat(section) == pat);
        CHECK(section.section_length ==
              9 + 4 * (pat.programs.size() + (pat.network_pid ? 1 : 0)));
    }
}

TEST_CASE("PMT decodes the demo inventory shape") {
    PmtTable pmt;
    pmt.program_number = 4673;
    pmt.pcr_pid = 520;
    pmt.streams = {
        {0x02, 520, {}}, {0x03, 730, {}}, {0x03, 731, {}}, {0x03, 732, {}}, {0x06, 800, {}}};
    PsiSection section = section_from_bytes(268, encode_pmt(pmt, 0));
    PmtTable back = parse_pmt(section);
    CHECK(back.streams.size() == 5);
    CHECK(back.pcr_pid == 520);
    CHECK(back == pmt);
}

TEST_CASE("PMT with an empty ES loop") {
    PmtTable pmt;
    pmt.program_number = 9;
    pmt.pcr_pid = 777;
    PsiSection section = section_from_bytes(300, encode_pmt(pmt, 2));
    PmtTable back = parse_pmt(section);
    CHECK(back.streams.empty());
    CHECK(back.pcr_pid == 777);
}

TEST_CASE("PMT encode/parse round trip") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        PmtTable pmt = random_pmt(rng);
        uint8_t version = static_cast<uint8_t>(rng() % 32);
        PsiSection section = section_from_bytes(400, encode_pmt(pmt, version));
        CHECK(section.version_number == version);
        CHECK(parse_pmt(section) == pmt);
    }
}

TEST_CASE("descriptor loop overrun is rejected") {
    PmtTable pmt;
    pmt.program_number = 3;
    pmt.pcr_pid = 55;
    auto bytes = encode_pmt(pmt, 0);
    // claim a bigger program_info_length than the body offers
    bytes[10 + 1] = 0x30;
    // CRC is now stale: rebuild it so only the overrun trips
    std::vector<uint8_t> fixed(bytes.begin(), bytes.end() - 4);
    uint32_t crc = crc32_mpeg(fixed);
    fixed.push_back(static_cast<uint8_t>(crc >> 24));
    fixed.push_back(static_cast<uint8_t>(crc >> 16));
    fixed.push_back(static_cast<uint8_t>(crc >> 8));
    fixed.push_back(static_cast<uint8_t>(crc));
    PsiSection section = section_from_bytes(100, fixed);
    REQUIRE(section.crc_status == CrcStatus::Valid);
    CHECK_THROWS_AS(parse_pmt(section), Error);
}

TEST_CASE("SI header classification") {
    std::vector<uint8_t> body(112);
    auto sdt = section_from_bytes(17, encode_long_section(0x42, 1, 21, 0, 0, body));
    SiTableInfo info = parse_si_header(sdt);
    CHECK(info.kind == SiKind::Sdt);
    CHECK(info.section_length == 121);
    REQUIRE(info.version_number.has_value());
    CHECK(*info.version_number == 21);

    std::vector<uint8_t> tdt_body(9, 0x32);
    auto tdt = section_from_bytes(20, encode_short_section(0x70, tdt_body));
    SiTableInfo tdt_info = parse_si_header(tdt);
    CHECK(tdt_info.kind == SiKind::Tdt);
    CHECK(tdt_info.section_length == 9);
    CHECK_FALSE(tdt_info.version_number.has_value()); // short form

    std::vector<uint8_t> other_body(10);
    auto other = section_from_bytes(4000, encode_long_section(0x99, 1, 0, 0, 0, other_body));
    CHECK(parse_si_header(other).kind == SiKind::Other);

    auto pmt_like = section_from_bytes(268, encode_pmt(PmtTable{1, 100, {}, {}}, 0));
    CHECK(parse_si_header(pmt_like).kind == SiKind::Other); // unannounced
    CHECK(parse_si_header(pmt_like, {268}).kind == SiKind::Pmt);
}

TEST_CASE("valid long-form sections always satisfy the CRC residual") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<uint8_t> body(rng() % 200);
        for (auto& b : body)
            b = static_cast<uint8_t>(rng());
        auto bytes = encode_long_section(0x40, 1, 0, 0, 0, body);
        CHECK(crc32_mpeg(bytes) == 0);
        CHECK(oracle::crc32_bitwise(bytes) == 0);
    }
}
