#include "tami/error.hpp"

#include <atomic>
#include <iostream>

namespace tami {

namespace {
std::atomic<bool> g_warnings{true};
}

void log_warning(const std::string& msg) {
  if (g_warnings.load(std::memory_order_relaxed)) std::cerr << "warning: " << msg << "\n";
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled, std::memory_order_relaxed); }

}  // namespace tami
