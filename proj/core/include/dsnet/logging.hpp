#pragma once

#include <string_view>

namespace dsnet::log {

// trace, debug, info, warn, error, critical or off. Throws ValidationError
// for anything else.
void set_level(std::string_view level);

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace dsnet::log
