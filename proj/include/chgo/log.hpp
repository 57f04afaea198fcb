#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

namespace chgo {

enum class LogLevel { Info, Warning, Error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

namespace detail {

struct LogState {
  std::mutex mu;
  LogSink sink;
};

inline LogState& log_state() {
  static LogState state;
  return state;
}

}  // namespace detail

// Replaces the process-wide sink; an empty sink restores stderr output.
// Returns the previous sink.
inline LogSink set_log_sink(LogSink sink) {
  auto& st = detail::log_state();
  std::lock_guard lock(st.mu);
  return std::exchange(st.sink, std::move(sink));
}

inline void log(LogLevel level, std::string_view message) {
  auto& st = detail::log_state();
  std::lock_guard lock(st.mu);
  if (st.sink) {
    st.sink(level, message);
    return;
  }
  static constexpr const char* kNames[] = {"info", "warning", "error"};
  std::clog << "[" << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

template <typename... Args>
void log_info(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  log(LogLevel::Info, os.str());
}

template <typename... Args>
void log_warning(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  log(LogLevel::Warning, os.str());
}

}  // namespace chgo
