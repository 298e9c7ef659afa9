#include "blgcn/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace blgcn::logging {
namespace {

std::atomic<Level> g_level{Level::Warn};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, std::string_view msg) {
  if (lvl < g_level.load(std::memory_order_relaxed)) return;
  std::lock_guard lock(g_mutex);
  std::clog << "[blgcn " << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level level) { g_level.store(level, std::memory_order_relaxed); }
Level level() { return g_level.load(std::memory_order_relaxed); }

void debug(std::string_view msg) { emit(Level::Debug, "debug", msg); }
void info(std::string_view msg) { emit(Level::Info, "info", msg); }
void warn(std::string_view msg) { emit(Level::Warn, "warn", msg); }
void error(std::string_view msg) { emit(Level::Error, "error", msg); }

}  // namespace blgcn::logging
