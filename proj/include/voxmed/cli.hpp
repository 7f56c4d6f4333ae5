#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "voxmed/error.hpp"

namespace voxmed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

int exit_code_for(ErrorCode code);

// args excludes the program name. env is the process environment as seen by
// the configuration layer.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env);

int run_cli(int argc, char** argv);

}  // namespace voxmed
