#include "log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace tail {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("TAIL_LOG");
    if (!env) return LogLevel::error;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

void log_line(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  const char* tag = level == LogLevel::error ? "error" : level == LogLevel::info ? "info" : "debug";
  std::fprintf(stderr, "[tail:%s] %s\n", tag, msg.c_str());
}

}  // namespace tail
