#pragma once

namespace kernelmix {

/// Command-line driver: subcommands fit, cv, simulate, bench, evaluate,
/// theory-check. Returns 0 on success, 2 on usage errors, 1 otherwise.
int cli_main(int argc, const char* const* argv);

} // namespace kernelmix
