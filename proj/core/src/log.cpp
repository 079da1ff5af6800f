#include "pft/log.hpp"

#include <spdlog/spdlog.h>

#include <atomic>

namespace pft {
namespace {
std::atomic<std::size_t> g_warnings{0};
}

void warn(const std::string& message) {
  g_warnings.fetch_add(1, std::memory_order_relaxed);
  spdlog::warn("{}", message);
}

std::size_t warning_count() noexcept { return g_warnings.load(std::memory_order_relaxed); }

void set_log_quiet(bool quiet) { spdlog::set_level(quiet ? spdlog::level::err : spdlog::level::info); }

}  // namespace pft
