#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace polishfb {

/// Verbosity from POLISHFB_LOG: "quiet" (0), "info" (1, default), "debug" (2).
inline int log_level() {
  static const int level = [] {
    const char* env = std::getenv("POLISHFB_LOG");
    if (env == nullptr) return 1;
    if (std::strcmp(env, "quiet") == 0 || std::strcmp(env, "0") == 0) return 0;
    if (std::strcmp(env, "debug") == 0 || std::strcmp(env, "2") == 0) return 2;
    return 1;
  }();
  return level;
}

template <class... Args>
void log_info(const char* format, Args... args) {
  if (log_level() >= 1) {
    std::fprintf(stderr, "[polishfb] ");
    std::fprintf(stderr, format, args...);
    std::fprintf(stderr, "\n");
  }
}

template <class... Args>
void log_debug(const char* format, Args... args) {
  if (log_level() >= 2) {
    std::fprintf(stderr, "[polishfb:debug] ");
    std::fprintf(stderr, format, args...);
    std::fprintf(stderr, "\n");
  }
}

} // namespace polishfb
