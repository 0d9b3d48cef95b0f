#include "ctf3d/log.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <mutex>

namespace ctf3d::log {
namespace {

std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;
std::vector<std::string>* g_capture = nullptr;

const char* tag(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warning";
    case Level::error: return "error";
  }
  return "?";
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void write(Level lvl, const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (lvl == Level::warn && g_capture != nullptr) {
    g_capture->push_back(message);
  }
  if (lvl >= g_level.load()) {
    std::cerr << "ctf3d " << tag(lvl) << ": " << message << '\n';
  }
}

WarningCapture::WarningCapture() {
  std::lock_guard lock(g_mutex);
  g_capture = &messages_;
}

WarningCapture::~WarningCapture() {
  std::lock_guard lock(g_mutex);
  g_capture = nullptr;
}

std::vector<std::string> WarningCapture::messages() const {
  std::lock_guard lock(g_mutex);
  return messages_;
}

bool WarningCapture::contains(const std::string& needle) const {
  std::lock_guard lock(g_mutex);
  return std::any_of(messages_.begin(), messages_.end(),
                     [&](const std::string& m) { return m.find(needle) != std::string::npos; });
}

}  // namespace ctf3d::log
