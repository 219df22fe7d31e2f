/**
 * @file cli.hpp
 * @brief Command-line front end: backtest, model-check, demo-fallacy, synth
 */

#pragma once

#include <iosfwd>

namespace rdoll::cli
{

    /// Parses argv and runs a subcommand. Returns the process exit status.
    int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace rdoll::cli
