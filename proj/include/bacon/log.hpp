#pragma once

#include <string>

namespace bacon::log {

enum class Level { debug, info, warning, error };

void set_level(Level level);
void message(Level level, const std::string& text);
inline void info(const std::string& text) { message(Level::info, text); }
inline void warning(const std::string& text) { message(Level::warning, text); }

// Number of warnings emitted so far (tests use it to observe degenerate batches).
long warning_count();

}  // namespace bacon::log
