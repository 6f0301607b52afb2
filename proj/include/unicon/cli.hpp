#pragma once

namespace unicon::cli {

/// Entry point shared by the binary and the in-process CLI tests.
/// Exit codes: 0 success, 1 module error, 2 usage error.
int run(int argc, const char* const* argv);

}  // namespace unicon::cli
