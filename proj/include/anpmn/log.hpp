// Minimal leveled logging to stderr. Level comes from ANPMN_LOG
// (error|warn|info|debug), default warn.
#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace anpmn::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level threshold();

template <typename... Args>
void write(Level lvl, std::string_view tag, const Args&... args) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  std::ostringstream os;
  os << "[" << tag << "] ";
  (os << ... << args);
  os << '\n';
  std::cerr << os.str();
}

template <typename... Args>
void warn(const Args&... args) { write(Level::kWarn, "warn", args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::kInfo, "info", args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::kDebug, "debug", args...); }

}  // namespace anpmn::log
