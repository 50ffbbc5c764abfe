#pragma once

namespace mtlab::labcli {

// Full command-line entry point: subcommands train | attack | sweep |
// diagnose | advtrain | report with --config, --seed, --out, --jobs.
// Returns the process exit code; failures print one JSON error line to
// stderr.
int run_cli(int argc, const char* const* argv);

} // namespace mtlab::labcli
