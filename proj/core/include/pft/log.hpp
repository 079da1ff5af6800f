#pragma once

#include <cstddef>
#include <string>

namespace pft {

/// Emits a warning through the library logger and bumps a process-wide counter
/// that callers (and tests) can poll to detect degraded paths.
void warn(const std::string& message);
std::size_t warning_count() noexcept;

/// Suppresses log output below the error level. The counter keeps counting.
void set_log_quiet(bool quiet);

}  // namespace pft
