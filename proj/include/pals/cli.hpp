#pragma once

#include <ostream>

namespace pals {

/// Entry point for the `pals` tool: train, evaluate, sweep and synth
/// subcommands. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pals
