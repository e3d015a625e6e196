#include "bacon/log.hpp"

#include <atomic>
#include <iostream>

namespace bacon::log {

namespace {
std::atomic<int> g_level{static_cast<int>(Level::info)};
std::atomic<long> g_warnings{0};
}  // namespace

void set_level(Level level) { g_level = static_cast<int>(level); }

void message(Level level, const std::string& text) {
  if (level == Level::warning) ++g_warnings;
  if (static_cast<int>(level) < g_level) return;
  static constexpr const char* kTags[] = {"debug", "info", "warning", "error"};
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << text << "\n";
}

long warning_count() { return g_warnings; }

}  // namespace bacon::log
