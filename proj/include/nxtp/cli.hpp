#pragma once

namespace nxtp {

// Dispatches the subcommands; returns the process exit code
// (0 success, 1 usage error, 2 data error, 3 numeric failure).
int run(int argc, const char* const* argv);

} // namespace nxtp
