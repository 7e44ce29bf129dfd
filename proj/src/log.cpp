#include "sedpipe/log.h"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace sed::log {
namespace {

Level from_env() {
  const char* v = std::getenv("SEDPIPE_LOG");
  if (v == nullptr) return Level::info;
  if (std::strcmp(v, "error") == 0) return Level::error;
  if (std::strcmp(v, "debug") == 0) return Level::debug;
  return Level::info;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(from_env())};
  return lvl;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

void emit(Level lvl, const char* tag, const std::string& msg) {
  if (static_cast<int>(lvl) > current().load()) return;
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[" << tag << "] " << msg << "\n";
}

}  // namespace

Level level() { return static_cast<Level>(current().load()); }
void set_level(Level lvl) { current().store(static_cast<int>(lvl)); }

void error(const std::string& msg) { emit(Level::error, "error", msg); }
// Warnings share the error threshold so they survive SEDPIPE_LOG=error.
void warn(const std::string& msg) { emit(Level::error, "warn", msg); }
void info(const std::string& msg) { emit(Level::info, "info", msg); }
void debug(const std::string& msg) { emit(Level::debug, "debug", msg); }

}  // namespace sed::log
