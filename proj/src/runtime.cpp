#include "styleset/runtime.hpp"

namespace styleset {
namespace {
int g_thread_count = 1;
}

int thread_count() { return g_thread_count; }

void set_thread_count(int n) { g_thread_count = n < 1 ? 1 : n; }

}  // namespace styleset
