#pragma once

namespace armaid {

/// Entry point of the `armaid` tool. Exit codes: 0 success, 1 runtime
/// failure, 2 usage error.
int cli_dispatch(int argc, char** argv);

}  // namespace armaid
