#pragma once

#include <string_view>

namespace pescal {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Thread-safe line-oriented logging to standard error.
void log_line(LogLevel level, std::string_view message);

inline void log_info(std::string_view message) { log_line(LogLevel::Info, message); }
inline void log_debug(std::string_view message) { log_line(LogLevel::Debug, message); }

}  // namespace pescal
