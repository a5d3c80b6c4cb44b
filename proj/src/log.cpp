#include "anpmn/log.hpp"

#include <cstdlib>
#include <string>

namespace anpmn::log {

Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("ANPMN_LOG");
    const std::string v = env ? env : "";
    if (v == "error") return Level::kError;
    if (v == "info") return Level::kInfo;
    if (v == "debug") return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

}  // namespace anpmn::log
