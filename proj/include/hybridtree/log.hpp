#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

namespace hybridtree {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {

struct WarningSink {
  std::mutex mutex;
  WarningHandler handler = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace detail

// Replaces the process-wide warning handler and returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  std::swap(sink.handler, handler);
  return handler;
}

inline void warn(const std::string& msg) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(msg);
}

// Captures warnings for the lifetime of the object. Used by tests and the CLI.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture()
      : previous_(set_warning_handler(
            [this](const std::string& msg) { messages_.push_back(msg); })) {}
  ~ScopedWarningCapture() { set_warning_handler(std::move(previous_)); }
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
  WarningHandler previous_;
};

}  // namespace hybridtree
