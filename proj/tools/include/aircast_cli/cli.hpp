#pragma once

namespace aircast::cli {

// Entry point behind the `aircast` binary; also driven in-process by the
// integration tests. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numeric failure.
int run(int argc, const char* const* argv);

}  // namespace aircast::cli
