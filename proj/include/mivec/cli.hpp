#pragma once

namespace mivec {

// Full command-line front end. Returns the process exit code:
// 0 success, 1 runtime failure, 2 usage or config error, 3 corrupt input
// stream, 4 evaluation dimension mismatch.
int run_cli(int argc, const char* const* argv);

} // namespace mivec
