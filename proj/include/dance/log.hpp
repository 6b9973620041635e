#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace dance {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Level comes from DANCE_LOG (error|warn|info|debug); default info.
inline LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* e = std::getenv("DANCE_LOG");
    if (!e) return LogLevel::info;
    if (!std::strcmp(e, "error")) return LogLevel::error;
    if (!std::strcmp(e, "warn")) return LogLevel::warn;
    if (!std::strcmp(e, "debug")) return LogLevel::debug;
    return LogLevel::info;
  }();
  return lvl;
}

inline void log_msg(LogLevel lvl, const std::string& msg) {
  if (lvl > log_level()) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

inline void log_info(const std::string& msg) { log_msg(LogLevel::info, msg); }
inline void log_warn(const std::string& msg) { log_msg(LogLevel::warn, msg); }
inline void log_debug(const std::string& msg) { log_msg(LogLevel::debug, msg); }

constexpr const char* kToolVersion = "dance 0.1.0";

}  // namespace dance
