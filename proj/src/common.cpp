#include "ivwald/common.hpp"

#include <atomic>
#include <cstdio>
#include <functional>
#include <thread>
#include <vector>

namespace ivwald {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void parallel_tasks(Index count, int threads, const std::function<void(Index)>& fn) {
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    if (workers == 1) {
        for (Index t = 0; t < count; ++t) fn(t);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int k = 0; k < workers; ++k)
        pool.emplace_back([&] {
            for (Index t = next.fetch_add(1); t < count; t = next.fetch_add(1)) fn(t);
        });
    for (auto& th : pool) th.join();
}

}  // namespace ivwald
