#include "crwkv/common.hpp"

#include <algorithm>
#include <atomic>

namespace crwkv {

namespace {
std::atomic<int> g_threads{1};
}

int num_threads() { return g_threads.load(); }

void set_num_threads(int n) {
    if (n <= 0) {
        unsigned hw = std::thread::hardware_concurrency();
        n = hw ? static_cast<int>(hw) : 1;
    }
    g_threads.store(std::max(1, n));
}

}  // namespace crwkv
