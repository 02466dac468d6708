#include "tskit/report_io.hpp"

#include "tskit/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace tskit {

using nlohmann::json;

namespace {

std::string hex_id(uint8_t value) {
    std::ostringstream out;
    out << "0x" << std::uppercase << std::setfill('0') << std::setw(2) << std::hex << int(value);
    return out.str();
}

std::string pid_both(uint16_t pid) {
    std::ostringstream out;
    out << pid << " (0x" << std::uppercase << std::hex << pid << ")";
    return out.str();
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void print(std::ostream& out) const {
        std::vector<size_t> width(header.size());
        for (size_t c = 0; c < header.size(); ++c)
            width[c] = header[c].size();
        for (const auto& row : rows)
            for (size_t c = 0; c < row.size(); ++c)
                width[c] = std::max(width[c], row[c].size());
        auto line = [&](const std::vector<std::string>& cells) {
            for (size_t c = 0; c < cells.size(); ++c) {
                out << cells[c];
                if (c + 1 < cells.size())
                    out << std::string(width[c] - cells[c].size() + 2, ' ');
            }
            out << "\n";
        };
        line(header);
        for (const auto& row : rows)
            line(row);
    }
};

const char* class_label(const PidClass& cls) {
    return to_string(cls.kind);
}

} // namespace

std::string report_to_text(const StreamReport& report, bool tree) {
    std::ostringstream out;
    out << "Stream report\n";
    out << "  alignment: offset " << report.alignment.offset << ", packet size "
        << report.alignment.packet_size << "\n";
    out << "  packets:   " << report.total_packets << "\n";
    if (report.bitrate_bps)
        out << "  bitrate:   " << std::fixed << std::setprecision(1) << *report.bitrate_bps
            << " bps\n";
    else
        out << "  bitrate:   n/a\n";
    out << "\n";

    out << "Transport packets\n";
    Table packets;
    packets.header = {"Index",        "PID value",          "Packet type",
                      "Error indicator", "Transport priority", "Adaptation control",
                      "PCR",          "Continuity counter"};
    uint64_t index = 0;
    for (const PidStats& row : report.packet_table) {
        std::vector<std::string> cells;
        cells.push_back(std::to_string(index++));
        cells.push_back(std::to_string(row.pid));
        cells.push_back(class_label(row.cls));
        cells.push_back(std::to_string(row.tei_count));
        cells.push_back(std::to_string(row.priority_count));
        cells.push_back(std::to_string(int(row.first_afc)));
        cells.push_back(row.first_pcr ? std::to_string(*row.first_pcr) : "-");
        cells.push_back(std::to_string(int(row.first_cc)));
        packets.rows.push_back(std::move(cells));
    }
    packets.print(out);
    out << "\n";

    out << "PSI sections\n";
    Table psi;
    psi.header = {"Index",          "PID value",      "PSI type", "Section length",
                  "Version number", "Section number", "Table ID"};
    for (const PsiRow& row : report.psi_table) {
        std::vector<std::string> cells;
        cells.push_back(std::to_string(row.index));
        cells.push_back(std::to_string(row.pid));
        cells.push_back(to_string(row.kind));
        cells.push_back(std::to_string(row.section_length));
        cells.push_back(row.version ? std::to_string(int(*row.version)) : "-");
        cells.push_back(std::to_string(int(row.section_number)));
        cells.push_back(hex_id(row.table_id));
        psi.rows.push_back(std::move(cells));
    }
    psi.print(out);
    out << "\n";

    if (tree) {
        out << report_to_tree(report) << "\n";
    }

    out << "Anomalies\n";
    if (report.anomalies.empty()) {
        out << "  none\n";
    } else {
        for (const AnomalyEvent& event : report.anomalies) {
            out << "  #" << event.packet_index << "  " << to_string(event.kind) << "  PID "
                << event.pid;
            if (event.expected)
                out << "  expected " << int(*event.expected);
            if (event.observed)
                out << "  observed " << int(*event.observed);
            if (!event.note.empty())
                out << "  (" << event.note << ")";
            out << "\n";
        }
    }
    out << "\n";

    out << "Summary\n";
    out << "  video PIDs:       " << report.summary.video << "\n";
    out << "  audio PIDs:       " << report.summary.audio << "\n";
    out << "  signaling PIDs:   " << report.summary.signaling << "\n";
    out << "  private PIDs:     " << report.summary.private_data << "\n";
    out << "  null PIDs:        " << report.summary.null_pids << "\n";
    out << "  unreferenced:     " << report.summary.unreferenced << "\n";
    out << "  anomalies:        " << report.anomalies.size() << "\n";
    return std::move(out).str();
}

std::string report_to_tree(const StreamReport& report) {
    std::ostringstream out;
    out << "Hierarchy\n";
    if (!report.pat) {
        out << "  (no PAT observed)\n";
        return std::move(out).str();
    }
    out << "  transport stream " << report.pat->transport_stream_id << " (PAT v"
        << int(report.pat->version) << ")\n";
    if (report.pat->network_pid)
        out << "    network -> PID " << pid_both(*report.pat->network_pid) << "\n";
    for (const auto& [program, pmt_pid] : report.pat->programs) {
        out << "    program " << program << " (0x" << std::uppercase << std::hex << program
            << std::dec << ") -> PMT PID " << pid_both(pmt_pid) << "\n";
        auto it = std::find_if(report.pmts.begin(), report.pmts.end(),
                               [&](const PmtTable& p) { return p.program_number == program; });
        if (it == report.pmts.end())
            continue;
        out << "      PCR PID " << pid_both(it->pcr_pid) << "\n";
        for (const PmtStream& es : it->streams) {
            out << "      " << to_string(class_for_stream_type(es.stream_type)) << " PID "
                << pid_both(es.elementary_pid) << ", stream type " << hex_id(es.stream_type);
            if (!es.es_info.empty())
                out << ", " << es.es_info.size() << " descriptor bytes";
            out << "\n";
            for (const PsiRow& row : report.psi_table) {
                if (row.pid != es.elementary_pid)
                    continue;
                out << "        section " << to_string(row.kind) << " " << hex_id(row.table_id)
                    << " len " << row.section_length << "\n";
            }
        }
        for (const PsiRow& row : report.psi_table) {
            if (row.pid != pmt_pid)
                continue;
            out << "      section " << to_string(row.kind) << " " << hex_id(row.table_id)
                << " len " << row.section_length;
            if (row.version)
                out << " v" << int(*row.version);
            out << "\n";
        }
    }
    bool si_header = false;
    for (const PsiRow& row : report.psi_table) {
        if (row.pid != kPidNit && row.pid != kPidSdt && row.pid != kPidEit && row.pid != kPidTdt)
            continue;
        if (!si_header) {
            out << "    service information\n";
            si_header = true;
        }
        out << "      " << to_string(row.kind) << " " << hex_id(row.table_id) << " PID "
            << pid_both(row.pid) << " len " << row.section_length;
        if (row.version)
            out << " v" << int(*row.version);
        out << "\n";
    }
    return std::move(out).str();
}

namespace {

const char* kind_name(SiKind kind) {
    return to_string(kind);
}

SiKind si_kind_from(const std::string& name) {
    if (name == "PAT") return SiKind::Pat;
    if (name == "PMT") return SiKind::Pmt;
    if (name == "NIT") return SiKind::Nit;
    if (name == "SDT") return SiKind::Sdt;
    if (name == "EIT") return SiKind::Eit;
    if (name == "TDT") return SiKind::Tdt;
    return SiKind::Other;
}

PidClassKind class_kind_from(const std::string& name) {
    if (name == "video") return PidClassKind::Video;
    if (name == "audio") return PidClassKind::Audio;
    if (name == "private") return PidClassKind::Private;
    if (name == "signaling") return PidClassKind::Psi;
    if (name == "null") return PidClassKind::Null;
    return PidClassKind::Unreferenced;
}

AnomalyKind anomaly_kind_from(const std::string& name) {
    if (name == "cc-discontinuity") return AnomalyKind::CcDiscontinuity;
    if (name == "cc-excess-duplicate") return AnomalyKind::CcExcessDuplicate;
    if (name == "tei-set") return AnomalyKind::TeiSet;
    if (name == "sync-loss") return AnomalyKind::SyncLoss;
    if (name == "crc-invalid") return AnomalyKind::CrcInvalid;
    if (name == "reserved-afc") return AnomalyKind::ReservedAfc;
    if (name == "pes-start-missing") return AnomalyKind::PesStartMissing;
    raise(Errc::bad_config, "unknown anomaly kind: " + name);
}

std::string bytes_to_hex(std::span<const uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

std::vector<uint8_t> hex_to_bytes(const std::string& text) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        raise(Errc::bad_config, "invalid hex digit in report");
    };
    if (text.size() % 2 != 0)
        raise(Errc::bad_config, "odd-length hex string in report");
    std::vector<uint8_t> out(text.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>((nibble(text[2 * i]) << 4) | nibble(text[2 * i + 1]));
    return out;
}

json pat_to_json(const PatTable& pat) {
    json j;
    j["transport_stream_id"] = pat.transport_stream_id;
    j["version"] = pat.version;
    if (pat.network_pid)
        j["network_pid"] = *pat.network_pid;
    j["programs"] = json::array();
    for (const auto& [program, pid] : pat.programs)
        j["programs"].push_back(json{{"program_number", program}, {"pmt_pid", pid}});
    return j;
}

PatTable pat_from_json(const json& j) {
    PatTable pat;
    pat.transport_stream_id = j.at("transport_stream_id").get<uint16_t>();
    pat.version = j.at("version").get<uint8_t>();
    if (j.contains("network_pid"))
        pat.network_pid = j["network_pid"].get<uint16_t>();
    for (const json& e : j.at("programs"))
        pat.programs.emplace_back(e.at("program_number").get<uint16_t>(),
                                  e.at("pmt_pid").get<uint16_t>());
    return pat;
}

} // namespace

std::string report_to_json(const StreamReport& report) {
    json j;
    j["format"] = "ts-stream-report";
    j["format_version"] = 1;
    j["alignment"] = {{"offset", report.alignment.offset},
                      {"packet_size", report.alignment.packet_size}};
    j["total_packets"] = report.total_packets;

    j["packet_table"] = json::array();
    for (const PidStats& row : report.packet_table) {
        json r;
        r["pid"] = row.pid;
        r["packet_count"] = row.packet_count;
        r["class"] = to_string(row.cls.kind);
        if (row.cls.kind == PidClassKind::Psi)
            r["psi_kind"] = kind_name(row.cls.psi_kind);
        r["tei_count"] = row.tei_count;
        r["priority_count"] = row.priority_count;
        r["first_cc"] = row.first_cc;
        r["last_cc"] = row.last_cc;
        r["pcr_count"] = row.pcr_count;
        r["first_afc"] = row.first_afc;
        if (row.first_pcr)
            r["first_pcr"] = *row.first_pcr;
        r["first_seen_index"] = row.first_seen_index;
        r["pes_complete"] = row.pes_complete;
        j["packet_table"].push_back(std::move(r));
    }

    j["psi_table"] = json::array();
    for (const PsiRow& row : report.psi_table) {
        json r;
        r["index"] = row.index;
        r["pid"] = row.pid;
        r["kind"] = kind_name(row.kind);
        r["table_id"] = row.table_id;
        r["section_length"] = row.section_length;
        if (row.version)
            r["version"] = *row.version;
        r["section_number"] = row.section_number;
        r["first_packet_index"] = row.first_packet_index;
        r["occurrences"] = row.occurrences;
        j["psi_table"].push_back(std::move(r));
    }

    if (report.pat)
        j["pat"] = pat_to_json(*report.pat);
    else
        j["pat"] = nullptr;

    j["pmts"] = json::array();
    for (const PmtTable& pmt : report.pmts) {
        json p;
        p["program_number"] = pmt.program_number;
        p["pcr_pid"] = pmt.pcr_pid;
        if (!pmt.program_info.empty())
            p["program_info_hex"] = bytes_to_hex(pmt.program_info);
        p["streams"] = json::array();
        for (const PmtStream& es : pmt.streams) {
            json s;
            s["stream_type"] = es.stream_type;
            s["pid"] = es.elementary_pid;
            if (!es.es_info.empty())
                s["es_info_hex"] = bytes_to_hex(es.es_info);
            p["streams"].push_back(std::move(s));
        }
        j["pmts"].push_back(std::move(p));
    }

    j["anomalies"] = json::array();
    for (const AnomalyEvent& event : report.anomalies) {
        json a;
        a["kind"] = to_string(event.kind);
        a["pid"] = event.pid;
        a["packet_index"] = event.packet_index;
        if (event.expected)
            a["expected"] = *event.expected;
        if (event.observed)
            a["observed"] = *event.observed;
        if (!event.note.empty())
            a["note"] = event.note;
        j["anomalies"].push_back(std::move(a));
    }

    if (report.bitrate_bps)
        j["bitrate_bps"] = *report.bitrate_bps;
    else
        j["bitrate_bps"] = nullptr;

    j["summary"] = {{"video", report.summary.video},
                    {"audio", report.summary.audio},
                    {"signaling", report.summary.signaling},
                    {"private", report.summary.private_data},
                    {"null", report.summary.null_pids},
                    {"unreferenced", report.summary.unreferenced}};
    return j.dump(2) + "\n";
}

StreamReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        raise(Errc::bad_config, std::string("report parse error: ") + e.what());
    }
    try {
        StreamReport report;
        report.alignment.offset = j.at("alignment").at("offset").get<size_t>();
        report.alignment.packet_size = j.at("alignment").at("packet_size").get<int>();
        report.total_packets = j.at("total_packets").get<uint64_t>();

        for (const json& r : j.at("packet_table")) {
            PidStats row;
            row.pid = r.at("pid").get<uint16_t>();
            row.packet_count = r.at("packet_count").get<uint64_t>();
            row.cls.kind = class_kind_from(r.at("class").get<std::string>());
            if (r.contains("psi_kind"))
                row.cls.psi_kind = si_kind_from(r["psi_kind"].get<std::string>());
            row.tei_count = r.at("tei_count").get<uint64_t>();
            row.priority_count = r.at("priority_count").get<uint64_t>();
            row.first_cc = r.at("first_cc").get<uint8_t>();
            row.last_cc = r.at("last_cc").get<uint8_t>();
            row.pcr_count = r.at("pcr_count").get<uint64_t>();
            row.first_afc = r.at("first_afc").get<uint8_t>();
            if (r.contains("first_pcr"))
                row.first_pcr = r["first_pcr"].get<uint64_t>();
            row.first_seen_index = r.at("first_seen_index").get<uint64_t>();
            row.pes_complete = r.at("pes_complete").get<uint64_t>();
            report.packet_table.push_back(std::move(row));
        }

        for (const json& r : j.at("psi_table")) {
            PsiRow row;
            row.index = r.at("index").get<uint64_t>();
            row.pid = r.at("pid").get<uint16_t>();
            row.kind = si_kind_from(r.at("kind").get<std::string>());
            row.table_id = r.at("table_id").get<uint8_t>();
            row.section_length = r.at("section_length").get<uint16_t>();
            if (r.contains("version"))
                row.version = r["version"].get<uint8_t>();
            row.section_number = r.at("section_number").get<uint8_t>();
            row.first_packet_index = r.at("first_packet_index").get<uint64_t>();
            row.occurrences = r.at("occurrences").get<uint64_t>();
            report.psi_table.push_back(std::move(row));
        }

        if (!j.at("pat").is_null())
            report.pat = pat_from_json(j["pat"]);

        for (const json& p : j.at("pmts")) {
            PmtTable pmt;
            pmt.program_number = p.at("program_number").get<uint16_t>();
            pmt.pcr_pid = p.at("pcr_pid").get<uint16_t>();
            if (p.contains("program_info_hex"))
                pmt.program_info = hex_to_bytes(p["program_info_hex"].get<std::string>());
            for (const json& s : p.at("streams")) {
                PmtStream es;
                es.stream_type = s.at("stream_type").get<uint8_t>();
                es.elementary_pid = s.at("pid").get<uint16_t>();
                if (s.contains("es_info_hex"))
                    es.es_info = hex_to_bytes(s["es_info_hex"].get<std::string>());
                pmt.streams.push_back(std::move(es));
            }
            report.pmts.push_back(std::move(pmt));
        }

        for (const json& a : j.at("anomalies")) {
            AnomalyEvent event;
            event.kind = anomaly_kind_from(a.at("kind").get<std::string>());
            event.pid = a.at("pid").get<uint16_t>();
            event.packet_index = a.at("packet_index").get<uint64_t>();
            if (a.contains("expected"))
                event.expected = a["expected"].get<uint8_t>();
            if (a.contains("observed"))
                event.observed = a["observed"].get<uint8_t>();
            if (a.contains("note"))
                event.note = a["note"].get<std::string>();
            report.anomalies.push_back(std::move(event));
        }

        if (!j.at("bitrate_bps").is_null())
            report.bitrate_bps = j["bitrate_bps"].get<double>();

        const json& s = j.at("summary");
        report.summary.video = s.at("video").get<uint64_t>();
        report.summary.audio = s.at("audio").get<uint64_t>();
        report.summary.signaling = s.at("signaling").get<uint64_t>();
        report.summary.private_data = s.at("private").get<uint64_t>();
        report.summary.null_pids = s.at("null").get<uint64_t>();
        report.summary.unreferenced = s.at("unreferenced").get<uint64_t>();
        return report;
    } catch (const json::exception& e) {
        raise(Errc::bad_config, std::string("report field error: ") + e.what());
    }
}

} // namespace tskit
