#pragma once

namespace needleforge {

/// Entry point behind the command-line binary. Returns the process exit
/// code: 0 success, 1 usage error, 2 invalid config or data, 3 fatal
/// simulation failure.
int run_cli(int argc, char** argv);

}  // namespace needleforge
