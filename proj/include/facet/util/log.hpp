#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

// Process-wide warning sink. Defaults to stderr; tests swap in a collector.

namespace facet {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {

struct WarningSink {
  std::mutex mu;
  WarningHandler handler = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace detail

inline void warn(const std::string& msg) {
  auto& s = detail::warning_sink();
  std::lock_guard lock(s.mu);
  if (s.handler) s.handler(msg);
}

/// Installs `h` and returns the previous handler.
inline WarningHandler set_warning_handler(WarningHandler h) {
  auto& s = detail::warning_sink();
  std::lock_guard lock(s.mu);
  return std::exchange(s.handler, std::move(h));
}

/// Collects warnings for the lifetime of the object.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture() {
    prev_ = set_warning_handler([this](const std::string& m) { messages_.push_back(m); });
  }
  ~ScopedWarningCapture() { set_warning_handler(std::move(prev_)); }
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  WarningHandler prev_;
  std::vector<std::string> messages_;
};

}  // namespace facet
