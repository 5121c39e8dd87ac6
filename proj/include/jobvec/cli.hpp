#pragma once

namespace jobvec {

/// Entry point behind the `jobvec` binary; exposed as a function so tests can
/// drive subcommands in-process. Exit codes: 0 success, 1 runtime failure,
/// 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace jobvec
