#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace egc2::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

inline std::atomic<int>& verbosity() {
  static std::atomic<int> level{static_cast<int>(Level::Warn)};
  return level;
}

inline void set_level(Level level) { verbosity() = static_cast<int>(level); }

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline void warn(std::string_view msg) {
  if (verbosity() < static_cast<int>(Level::Warn)) return;
  std::lock_guard lock(sink_mutex());
  std::cerr << "[egc2] warning: " << msg << '\n';
}

inline void info(std::string_view msg) {
  if (verbosity() < static_cast<int>(Level::Info)) return;
  std::lock_guard lock(sink_mutex());
  std::cerr << "[egc2] " << msg << '\n';
}

}  // namespace egc2::log
