#pragma once

#include <ostream>

namespace ela::cli {

enum ExitCode { ok = 0, failure = 1, bad_flags = 2, bad_data = 3, not_converged = 4 };

/// Entry point shared by the ela_ml binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace ela::cli
