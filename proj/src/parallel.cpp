#include "bbm/parallel.hpp"

namespace bbm {

namespace {
int g_threads = 0;
}

void set_thread_count(int threads) { g_threads = threads > 0 ? threads : 0; }

int thread_count() noexcept { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

}  // namespace bbm
