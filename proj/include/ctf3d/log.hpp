#pragma once

#include <functional>
#include <string>
#include <vector>

namespace ctf3d::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

void set_level(Level level);
Level level();

void write(Level level, const std::string& message);
inline void debug(const std::string& m) { write(Level::debug, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }

/// Collects warnings emitted on any thread while alive. Used by tests.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> messages() const;
  bool contains(const std::string& needle) const;

 private:
  std::vector<std::string> messages_;
};

}  // namespace ctf3d::log
