#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace dsnet::cli {

// Config overlay for an ablation preset: full, no_calib, no_orth, no_recon
// or baseline. Throws ValidationError for anything else.
std::map<std::string, std::string> ablation_preset(const std::string& name);
std::vector<std::string> preset_names();

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on invalid input and 2 on runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace dsnet::cli
