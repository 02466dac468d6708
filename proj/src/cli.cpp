#include "tskit/cli.hpp"

#include "tskit/analysis.hpp"
#include "tskit/demux.hpp"
#include "tskit/errors.hpp"
#include "tskit/genstream.hpp"
#include "tskit/ingest.hpp"
#include "tskit/report_io.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

namespace tskit {

namespace {

constexpr int kExitClean = 0;
constexpr int kExitAnomalies = 1;
constexpr int kExitError = 2;

std::atomic<bool> g_interrupted{false};

void on_interrupt(int) {
    g_interrupted.store(true);
}

struct UdpEndpoint {
    std::string address;
    uint16_t port = 0;
};

UdpEndpoint parse_endpoint(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos)
        raise(Errc::bad_config, "expected addr:port, got " + text);
    UdpEndpoint ep;
    ep.address = text.substr(0, colon);
    int port = std::atoi(text.c_str() + colon + 1);
    if (port <= 0 || port > 65535)
        raise(Errc::bad_config, "bad UDP port in " + text);
    ep.port = static_cast<uint16_t>(port);
    return ep;
}

int packet_size_from(const std::string& text) {
    if (text == "auto")
        return 0;
    if (text == "188")
        return kPacketSize;
    if (text == "204")
        return kRsPacketSize;
    raise(Errc::bad_config, "--packet-size must be auto, 188 or 204");
}

bool is_multicast(const std::string& address) {
    int first = std::atoi(address.c_str());
    return first >= 224 && first <= 239;
}

std::string default_format() {
    const char* env = std::getenv("TSKIT_FORMAT");
    if (env && std::string(env) == "json")
        return "json";
    return "text";
}

void emit_report(const StreamReport& report, const std::string& format, bool tree,
                 const std::string& out_path, std::ostream& out) {
    std::string text = format == "json" ? report_to_json(report) : report_to_text(report, tree);
    if (out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream file(out_path);
    if (!file)
        raise(Errc::sink_write_failure, "cannot open " + out_path);
    file << text;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        raise(Errc::source_unavailable, "cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        raise(Errc::sink_write_failure, "cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        raise(Errc::sink_write_failure, "short write to " + path);
}

int run_analyze(const std::string& input, const std::string& udp, int packet_size,
                const std::string& format, bool tree, const std::string& out_path,
                double duration, std::ostream& out) {
    ReaderOptions options;
    options.packet_size = packet_size;
    StreamReport report;
    if (!udp.empty()) {
        UdpEndpoint ep = parse_endpoint(udp);
        UdpOptions uopt;
        if (duration > 0)
            uopt.duration_s = duration;
        uopt.idle_timeout_ms = 2000;
        uopt.stop = &g_interrupted;
        UdpSource source(is_multicast(ep.address) ? "" : ep.address, ep.port,
                         is_multicast(ep.address) ? ep.address : "", uopt);
        AlignedReader reader(source, options);
        report = analyze_reader(reader);
    } else {
        FileSource source(input);
        AlignedReader reader(source, options);
        report = analyze_reader(reader);
    }
    emit_report(report, format, tree, out_path, out);
    return report.anomalies.empty() ? kExitClean : kExitAnomalies;
}

int run_demux(const std::string& input, const std::string& pids_arg, int packet_size,
              const std::string& out_dir, std::ostream& out, std::ostream& err) {
    DemuxSelection selection;
    if (pids_arg == "all-es") {
        selection.all_es = true;
    } else {
        std::stringstream ss(pids_arg);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty())
                continue;
            int pid = std::atoi(item.c_str());
            if (pid < 0 || pid > kMaxPid)
                raise(Errc::bad_config, "bad PID: " + item);
            selection.pids.insert(static_cast<uint16_t>(pid));
        }
        if (selection.pids.empty())
            raise(Errc::bad_config, "--pids needs a list or all-es");
    }

    std::filesystem::path base(input);
    if (!out_dir.empty())
        base = std::filesystem::path(out_dir) / base.filename();

    FileSource source(input);
    ReaderOptions options;
    options.packet_size = packet_size;
    AlignedReader reader(source, options);
    auto summaries = demux_to_sinks(reader, selection, [&](uint16_t pid) {
        return std::make_unique<FileSink>(default_es_path(base, pid));
    });

    for (const auto& [pid, summary] : summaries) {
        if (!summary.seen) {
            err << "warning: PID " << pid << " not present in the stream\n";
            continue;
        }
        out << default_es_path(base, pid).string() << "  " << summary.bytes << " bytes, "
            << summary.pes_count << " PES units";
        if (summary.write_failed)
            out << "  (write failed, output truncated)";
        out << "\n";
    }
    return kExitClean;
}

int run_generate(const std::string& spec_path, bool demo, const std::string& out_path,
                 std::optional<uint64_t> seed, std::optional<double> duration,
                 bool print_spec, std::ostream& out) {
    StreamSpec spec = demo ? builtin_demo_spec() : load_stream_spec(spec_path);
    if (seed)
        spec.seed = *seed;
    if (duration)
        spec.duration_ms = static_cast<uint32_t>(*duration * 1000.0 + 0.5);
    if (print_spec) {
        out << stream_spec_to_json(spec);
        return kExitClean;
    }
    Generated generated = generate(spec);
    write_file(out_path, generated.bytes);
    out << out_path << "  " << generated.bytes.size() << " bytes, "
        << generated.truth.total_packets << " packets of " << generated.truth.packet_size
        << "\n";
    return kExitClean;
}

int run_inject(const std::string& spec_path, const std::string& input,
               const std::string& output, int packet_size, std::ostream& out) {
    StreamSpec spec = load_stream_spec(spec_path);
    std::vector<uint8_t> bytes = read_file(input);
    int size = packet_size != 0 ? packet_size : spec.packet_size;
    Injected injected = inject_errors(bytes, spec.errors, size);
    write_file(output, injected.bytes);
    out << output << "  " << injected.ledger.size() << " mutations applied\n";
    for (const InjectionRecord& record : injected.ledger)
        out << "  " << to_string(record.kind) << "  PID " << record.pid << "  packet "
            << record.packet_index << "  " << record.detail << "\n";
    return kExitClean;
}

int run_capture(const std::string& udp, const std::string& out_path, double duration,
                std::optional<uint64_t> max_bytes, int idle_timeout_ms, std::ostream& out) {
    UdpEndpoint ep = parse_endpoint(udp);
    UdpOptions options;
    if (duration > 0)
        options.duration_s = duration;
    options.max_bytes = max_bytes;
    options.idle_timeout_ms = idle_timeout_ms;
    options.stop = &g_interrupted;
    UdpSource source(is_multicast(ep.address) ? "" : ep.address, ep.port,
                     is_multicast(ep.address) ? ep.address : "", options);
    CaptureSummary summary = capture_to_file(source, out_path);
    out << out_path << "  " << summary.bytes << " bytes, " << summary.datagrams
        << " datagrams, " << summary.packets << " packets\n";
    return kExitClean;
}

int run_monitor(const std::string& udp, int packet_size, double duration, std::ostream& out) {
    UdpEndpoint ep = parse_endpoint(udp);
    UdpOptions uopt;
    if (duration > 0)
        uopt.duration_s = duration;
    uopt.stop = &g_interrupted;
    UdpSource source(is_multicast(ep.address) ? "" : ep.address, ep.port,
                     is_multicast(ep.address) ? ep.address : "", uopt);
    ReaderOptions options;
    options.packet_size = packet_size;
    AlignedReader reader(source, options);

    StreamAnalyzer analyzer;
    size_t loss_cursor = 0;
    bool have_alignment = false;
    uint64_t last_packets = 0;
    uint64_t last_bytes = 0;
    auto window_start = std::chrono::steady_clock::now();

    while (auto frame = reader.next()) {
        if (!have_alignment) {
            analyzer.set_alignment(reader.alignment());
            have_alignment = true;
        }
        for (; loss_cursor < reader.sync_loss_offsets().size(); ++loss_cursor)
            analyzer.note_sync_loss(reader.sync_loss_offsets()[loss_cursor]);
        analyzer.feed_frame(frame->data, frame->source_offset);

        auto now = std::chrono::steady_clock::now();
        if (now - window_start >= std::chrono::seconds(1)) {
            uint64_t packets = analyzer.packets_seen();
            uint64_t byte_count = packets * static_cast<uint64_t>(reader.alignment().packet_size);
            double secs = std::chrono::duration<double>(now - window_start).count();
            out << "monitor: " << (packets - last_packets) << " pkt/s, "
                << static_cast<uint64_t>((byte_count - last_bytes) * 8 / secs) << " bps, "
                << analyzer.anomalies_seen() << " anomalies total\n"
                << std::flush;
            last_packets = packets;
            last_bytes = byte_count;
            window_start = now;
        }
    }
    for (; loss_cursor < reader.sync_loss_offsets().size(); ++loss_cursor)
        analyzer.note_sync_loss(reader.sync_loss_offsets()[loss_cursor]);
    StreamReport report = analyzer.finish();
    out << report_to_text(report, false);
    return report.anomalies.empty() ? kExitClean : kExitAnomalies;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Transport-stream analysis toolkit"};
    app.require_subcommand(1);

    std::string input, udp, out_path, out_dir, format = default_format(), spec_path;
    std::string pids_arg = "all-es", packet_size_arg = "auto", inject_in, inject_out;
    bool tree = false, demo = false, print_spec = false;
    double duration = 0;
    std::optional<uint64_t> seed, max_bytes;
    int idle_timeout_ms = 2000;

    CLI::App* analyze = app.add_subcommand("analyze", "Parse and validate a stream");
    analyze->add_option("input", input, "input .ts file");
    analyze->add_option("--udp", udp, "read from UDP addr:port instead of a file");
    analyze->add_option("--packet-size", packet_size_arg, "auto|188|204");
    analyze->add_option("--format", format, "text|json");
    analyze->add_flag("--tree", tree, "hierarchical program/PID/section view");
    analyze->add_option("--out", out_path, "write the report to a file");
    analyze->add_option("--duration", duration, "UDP listen time in seconds");

    CLI::App* demux = app.add_subcommand("demux", "Extract elementary streams");
    demux->add_option("input", input, "input .ts file")->required();
    demux->add_option("--pids", pids_arg, "comma-separated PID list or all-es");
    demux->add_option("--packet-size", packet_size_arg, "auto|188|204");
    demux->add_option("--out-dir", out_dir, "directory for the .es files");

    CLI::App* generate = app.add_subcommand("generate", "Synthesize a stream");
    generate->add_option("--spec", spec_path, "stream spec (JSON)");
    generate->add_flag("--demo", demo, "use the built-in demo spec");
    generate->add_option("--out", out_path, "output .ts path");
    generate->add_option("--seed", seed, "override the spec seed");
    generate->add_option("--duration", duration, "override duration, seconds");
    generate->add_flag("--print-spec", print_spec, "print the effective spec and exit");

    CLI::App* inject = app.add_subcommand("inject", "Corrupt a stream for testing");
    inject->add_option("--spec", spec_path, "error spec (JSON, errors array)")->required();
    inject->add_option("input", inject_in, "input .ts file")->required();
    inject->add_option("output", inject_out, "output .ts file")->required();
    inject->add_option("--packet-size", packet_size_arg, "auto|188|204");

    CLI::App* capture = app.add_subcommand("capture", "Record a UDP stream to disk");
    capture->add_option("--udp", udp, "UDP addr:port")->required();
    capture->add_option("--out", out_path, "output file")->required();
    capture->add_option("--duration", duration, "capture time in seconds");
    capture->add_option("--max-bytes", max_bytes, "stop after this many bytes");
    capture->add_option("--idle-timeout", idle_timeout_ms, "stop after silence, ms");

    CLI::App* monitor = app.add_subcommand("monitor", "Live per-second UDP summary");
    monitor->add_option("--udp", udp, "UDP addr:port")->required();
    monitor->add_option("--packet-size", packet_size_arg, "auto|188|204");
    monitor->add_option("--duration", duration, "stop after this many seconds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return kExitClean;
        }
        err << e.what() << "\n" << app.help();
        return kExitError;
    }

    std::signal(SIGINT, on_interrupt);
    g_interrupted.store(false);

    try {
        int packet_size = packet_size_from(packet_size_arg);
        if (analyze->parsed()) {
            if (input.empty() && udp.empty())
                raise(Errc::bad_config, "analyze needs an input file or --udp");
            if (format != "text" && format != "json")
                raise(Errc::bad_config, "--format must be text or json");
            return run_analyze(input, udp, packet_size, format, tree, out_path, duration, out);
        }
        if (demux->parsed())
            return run_demux(input, pids_arg, packet_size, out_dir, out, err);
        if (generate->parsed()) {
            if (!demo && spec_path.empty())
                raise(Errc::bad_config, "generate needs --spec or --demo");
            if (!print_spec && out_path.empty())
                raise(Errc::bad_config, "generate needs --out");
            std::optional<double> dur;
            if (duration > 0)
                dur = duration;
            return run_generate(spec_path, demo, out_path, seed, dur, print_spec, out);
        }
        if (inject->parsed())
            return run_inject(spec_path, inject_in, inject_out, packet_size, out);
        if (capture->parsed())
            return run_capture(udp, out_path, duration, max_bytes, idle_timeout_ms, out);
        if (monitor->parsed())
            return run_monitor(udp, packet_size, duration, out);
        err << app.help();
        return kExitError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

} // namespace tskit
