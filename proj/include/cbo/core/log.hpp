#pragma once

#include <functional>
#include <string>

namespace cbo {

using WarningHandler = std::function<void(const std::string&)>;

/// Replaces the warning sink (stderr by default); returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

}  // namespace cbo
