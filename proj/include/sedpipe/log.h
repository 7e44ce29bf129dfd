#pragma once

#include <string>

namespace sed::log {

enum class Level { error = 0, info = 1, debug = 2 };

// Reads SEDPIPE_LOG once; defaults to info.
Level level();
void set_level(Level lvl);

void error(const std::string& msg);
void warn(const std::string& msg);
void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace sed::log
