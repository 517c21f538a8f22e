#pragma once

#include <string>

namespace rbc {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Diagnostics go to standard error; data never does.
void log_warn(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace rbc
