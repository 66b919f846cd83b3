#include <atomic>

#include "pekar/parallel.hpp"

namespace pekar {

namespace {
std::atomic<std::size_t> g_threads{1};
}

void set_thread_count(std::size_t n) { g_threads.store(n == 0 ? 1 : n); }
std::size_t thread_count() { return g_threads.load(); }

}  // namespace pekar
