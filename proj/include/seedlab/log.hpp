#pragma once

#include <string_view>

namespace seedlab::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Read once from SEEDLAB_LOG (quiet|info|debug); defaults to info.
Level level();
void set_level(Level l);

// All diagnostics go to stderr. Warnings are suppressed only at quiet.
void warn(std::string_view msg);
void info(std::string_view msg);
void debug(std::string_view msg);

}  // namespace seedlab::log
