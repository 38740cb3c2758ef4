#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hypermux::cli {

// Exit codes.
constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

// Subcommands: generate, train, diagnose, eval, sweep, ablate. `args` excludes
// the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

// "a:b:step" (inclusive) or a comma-separated list.
std::vector<std::size_t> parse_d_values(const std::string& text);

}  // namespace hypermux::cli
