#pragma once

#include "tskit/analysis.hpp"

#include <string>

namespace tskit {

/// Plain-text report: transport-packet table, PSI-section table,
/// programs, anomalies, summary. Deterministic for identical reports.
std::string report_to_text(const StreamReport& report, bool tree = false);

/// Program -> PID -> section hierarchy view.
std::string report_to_tree(const StreamReport& report);

/// Versioned structured form; parse_report inverts it exactly.
std::string report_to_json(const StreamReport& report);
StreamReport report_from_json(const std::string& text);

} // namespace tskit
