#pragma once

#include <string>
#include <vector>

namespace mricolor::cli {

/// One CLI invocation; args excludes the program name.
/// Subcommands: gen-data | train-seg | train | infer | eval | ablate.
/// Every subcommand takes --config FILE plus repeatable --set key=value
/// overrides and writes the resolved configuration next to its outputs.
/// Exit codes: 0 success, 1 usage or configuration error (schema help
/// printed), 2 runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace mricolor::cli
