#pragma once

#include <stdexcept>
#include <string>

namespace tskit {

/// Operational failure codes. Stream anomalies (CC gaps, bad CRCs, sync
/// loss...) are never exceptions; they travel as AnomalyEvent data.
enum class Errc {
    sync_byte_mismatch,
    malformed_adaptation,
    need_more_data,
    no_sync_found,
    wrong_table_id,
    crc_invalid,
    bad_pat_body,
    descriptor_overrun,
    insufficient_pcrs,
    non_monotonic_pcr,
    spec_over_capacity,
    spec_pid_collision,
    index_out_of_range,
    source_unavailable,
    sink_write_failure,
    bad_config,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace tskit
