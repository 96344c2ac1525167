#pragma once

namespace methanol {

// Full command-line entry point (dataprep/train/eval/generate/sweep/inspect).
// Returns the process exit code: 0 ok, 2 usage or config error, 3 provider
// failure, 4 training divergence, 5 checkpoint error.
int cli_run(int argc, const char* const* argv);

}  // namespace methanol
