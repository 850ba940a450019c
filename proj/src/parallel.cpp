#include "codecforge/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace codecforge {

namespace {

std::optional<std::size_t> g_override;

std::size_t threads_from_env() {
  const char* raw = std::getenv("CODECFORGE_THREADS");
  if (!raw || !*raw) return 0;
  try {
    const long value = std::stol(raw);
    return value > 0 ? static_cast<std::size_t>(value) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::size_t thread_count() {
  if (g_override) return *g_override;
  static const std::size_t from_env = threads_from_env();
  return from_env;
}

void set_thread_count(std::size_t threads) { g_override = threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back([&body, begin, end = std::min(n, begin + chunk)] { body(begin, end); });
  }
}

}  // namespace codecforge
