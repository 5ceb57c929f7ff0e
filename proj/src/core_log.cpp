#include "cbo/core/log.hpp"

#include <iostream>
#include <mutex>

namespace cbo {

namespace {

std::mutex g_mutex;
WarningHandler g_handler = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_mutex);
  WarningHandler old = std::move(g_handler);
  g_handler = std::move(handler);
  return old;
}

void warn(const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_handler) g_handler(message);
}

}  // namespace cbo
