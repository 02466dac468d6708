#pragma once

#include <iosfwd>

namespace tskit {

/// Command dispatch for the `tskit` binary. Exit codes: 0 success with a
/// clean stream, 1 success with anomalies detected, 2 operational error
/// (including invalid flags, reported on `err`).
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace tskit
