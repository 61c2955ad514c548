#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace swarmcam::cli {

/// Runs one subcommand (synth, flow, train, explain, eval). Returns the
/// process exit code: 0 ok, 2 usage, 3 format, 4 validation, 5 training,
/// 1 anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace swarmcam::cli
