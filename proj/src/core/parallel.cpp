#include "core/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ecdm {

int worker_count() {
    static const int count = [] {
        if (const char* env = std::getenv("ECDM_WORKERS")) {
            const int requested = std::atoi(env);
            if (requested >= 1) return std::min(requested, 64);
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return static_cast<int>(std::clamp(hw, 1u, 8u));
    }();
    return count;
}

int parallel_chunk_count(int64_t n) {
    if (n <= 0) return 0;
    return static_cast<int>(std::min<int64_t>(worker_count(), n));
}

void parallel_for_indexed(int64_t n,
                          const std::function<void(int, int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = parallel_chunk_count(n);
    if (workers <= 1) {
        fn(0, 0, n);
        return;
    }
    const int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) {
        const int64_t begin = w * chunk;
        const int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    }
    fn(0, 0, std::min<int64_t>(chunk, n));
    for (auto& t : pool) t.join();
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    parallel_for_indexed(n, [&fn](int, int64_t b, int64_t e) { fn(b, e); });
}

} // namespace ecdm
